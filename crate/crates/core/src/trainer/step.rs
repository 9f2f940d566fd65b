use bcenhance_nn::{Binding, Graph, Var};

use super::config::DiscriminatorUpdate;
use super::data::Batch;
use super::state::TrainState;
use crate::error::{Error, Result};
use crate::losses::{
    adv_d_loss, adv_g_loss, cycle_loss, identity_loss, total_objective_graph, LossParts, Variant,
};
use crate::model::Discriminator;

/// Loss values of one iteration. For the baseline variant `adc` holds the
/// single adversarial term and `add` is `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub iteration: u64,
    pub adc: f64,
    pub add: Option<f64>,
    pub cyc: f64,
    pub id: f64,
    /// Generator objective.
    pub total: f64,
    /// Discriminator objective.
    pub disc: f64,
}

impl StepLosses {
    /// Tab-separated log record: iteration, adc, add (`-` when absent),
    /// cyc, id, total, discriminator loss.
    pub fn to_record(&self) -> String {
        let add = self.add.map_or_else(|| "-".to_string(), |v| v.to_string());
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.iteration, self.adc, add, self.cyc, self.id, self.total, self.disc
        )
    }
}

pub const LOSS_LOG_HEADER: &str = "# iteration\tadc\tadd\tcyc\tid\ttotal\tdisc";

fn check_finite(name: &str, v: f64, iteration: u64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric(format!(
            "non-finite {name} loss ({v}) at iteration {iteration}"
        )))
    }
}

/// Graph values of the generator objective for one batch.
struct GeneratorTerms {
    adc: Var,
    add: Option<Var>,
    cyc: Var,
    id: Var,
    total: Var,
    /// Detached G_{B→A}(b) values for the discriminator update.
    fake: bcenhance_nn::Tensor,
}

fn generator_terms(
    state: &TrainState,
    graph: &mut Graph,
    gb: (&Binding, &Binding),
    db: (&Binding, Option<&Binding>),
    batch: &Batch,
) -> Result<GeneratorTerms> {
    let form = state.config.weights.form;
    let b = graph.constant(batch.b.clone());
    let a = graph.constant(batch.a.clone());
    let fake = state.g_ba.net.forward(graph, gb.0, b)?;
    let rec = state.g_ab.net.forward(graph, gb.1, fake)?;
    let same = state.g_ba.net.forward(graph, gb.0, a)?;
    let cyc = cycle_loss(graph, b, rec)?;
    let id = identity_loss(graph, a, same)?;
    let c_scores = state.d_c.net.forward(graph, db.0, fake)?.scores;
    let adc = adv_g_loss(graph, c_scores, form);
    let add = match (&state.d_d, db.1) {
        (Some(d), Some(binding)) => {
            let s = d.net.forward(graph, binding, fake)?.scores;
            Some(adv_g_loss(graph, s, form))
        }
        _ => None,
    };
    let parts = match state.config.variant {
        Variant::Baseline => LossParts {
            adv: Some(adc),
            cyc: Some(cyc),
            id: Some(id),
            ..Default::default()
        },
        Variant::Dual => LossParts {
            adc: Some(adc),
            add,
            cyc: Some(cyc),
            id: Some(id),
            ..Default::default()
        },
    };
    let total = total_objective_graph(graph, &parts, &state.config.weights, state.config.variant)?;
    Ok(GeneratorTerms {
        adc,
        add,
        cyc,
        id,
        total,
        fake: graph.value(fake).clone(),
    })
}

/// Averages scalar vars.
fn mean_of(graph: &mut Graph, vars: &[Var]) -> Result<Var> {
    let mut acc = vars[0];
    for &v in &vars[1..] {
        acc = graph.add(acc, v)?;
    }
    Ok(graph.affine(acc, 1.0 / vars.len() as f64, 0.0))
}

/// Generator update: both generators step on the summed objective with the
/// discriminators held fixed. Returns partial losses and the detached fakes.
pub fn generator_update(
    state: &mut TrainState,
    batches: &[Batch],
) -> Result<(StepLosses, Vec<bcenhance_nn::Tensor>)> {
    if batches.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let it = state.iteration;
    let mut graph = Graph::new();
    let gb_ba = state.g_ba.net.params.bind(&mut graph);
    let gb_ab = state.g_ab.net.params.bind(&mut graph);
    let db_c = state.d_c.net.params.bind_frozen(&mut graph);
    let db_d = state
        .d_d
        .as_ref()
        .map(|d| d.net.params.bind_frozen(&mut graph));
    let mut terms = Vec::with_capacity(batches.len());
    for batch in batches {
        terms.push(generator_terms(
            state,
            &mut graph,
            (&gb_ba, &gb_ab),
            (&db_c, db_d.as_ref()),
            batch,
        )?);
    }
    let pick = |graph: &mut Graph, f: &dyn Fn(&GeneratorTerms) -> Var| -> Result<f64> {
        let vars: Vec<Var> = terms.iter().map(f).collect();
        let m = mean_of(graph, &vars)?;
        Ok(graph.value(m).item())
    };
    let cyc = check_finite("cycle", pick(&mut graph, &|t| t.cyc)?, it)?;
    let id = check_finite("identity", pick(&mut graph, &|t| t.id)?, it)?;
    let adc_name = if state.d_d.is_some() {
        "classification adversarial"
    } else {
        "adversarial"
    };
    let adc = check_finite(adc_name, pick(&mut graph, &|t| t.adc)?, it)?;
    let add = match terms[0].add {
        Some(_) => Some(check_finite(
            "defect adversarial",
            pick(&mut graph, &|t| t.add.expect("dual terms"))?,
            it,
        )?),
        None => None,
    };
    let totals: Vec<Var> = terms.iter().map(|t| t.total).collect();
    let total_var = mean_of(&mut graph, &totals)?;
    let total = check_finite("generator total", graph.value(total_var).item(), it)?;

    graph.backward(total_var)?;
    state.g_ba.net.params.collect_grads(&graph, &gb_ba)?;
    state.g_ab.net.params.collect_grads(&graph, &gb_ab)?;
    state.g_ba.adam.step(&mut state.g_ba.net.params)?;
    state.g_ab.adam.step(&mut state.g_ab.net.params)?;

    let fakes = terms.into_iter().map(|t| t.fake).collect();
    Ok((
        StepLosses {
            iteration: it,
            adc,
            add,
            cyc,
            id,
            total,
            disc: f64::NAN,
        },
        fakes,
    ))
}

fn discriminator_loss(
    d: &Discriminator,
    graph: &mut Graph,
    binding: &Binding,
    real: Var,
    fake: Var,
    state: &TrainState,
) -> Result<Var> {
    let r = d.forward(graph, binding, real)?.scores;
    let f = match state.config.discriminator_update {
        DiscriminatorUpdate::Full => Some(d.forward(graph, binding, fake)?.scores),
        DiscriminatorUpdate::RealOnly => None,
    };
    adv_d_loss(graph, r, f, state.config.weights.form)
}

/// Discriminator update on real AC crops and detached fakes. Returns the
/// discriminator objective.
pub fn discriminator_update(
    state: &mut TrainState,
    batches: &[Batch],
    fakes: &[bcenhance_nn::Tensor],
) -> Result<f64> {
    let mut graph = Graph::new();
    let bc = state.d_c.net.params.bind(&mut graph);
    let bd = state.d_d.as_ref().map(|d| d.net.params.bind(&mut graph));
    let mut losses = Vec::new();
    for (batch, fake) in batches.iter().zip(fakes) {
        let real = graph.constant(batch.a.clone());
        let fake = graph.constant(fake.clone());
        let mut l = discriminator_loss(&state.d_c.net, &mut graph, &bc, real, fake, state)?;
        if let (Some(d), Some(b)) = (&state.d_d, &bd) {
            let ld = discriminator_loss(&d.net, &mut graph, b, real, fake, state)?;
            l = graph.add(l, ld)?;
        }
        losses.push(l);
    }
    let loss = mean_of(&mut graph, &losses)?;
    let value = check_finite("discriminator", graph.value(loss).item(), state.iteration)?;
    graph.backward(loss)?;
    state.d_c.net.params.collect_grads(&graph, &bc)?;
    state.d_c.adam.step(&mut state.d_c.net.params)?;
    if let (Some(d), Some(b)) = (&mut state.d_d, &bd) {
        d.net.params.collect_grads(&graph, b)?;
        d.adam.step(&mut d.net.params)?;
    }
    Ok(value)
}

/// One iteration: generator update, then discriminator update on the
/// detached fakes; the iteration counter advances by one.
pub fn train_step(state: &mut TrainState, batches: &[Batch]) -> Result<StepLosses> {
    let (mut losses, fakes) = generator_update(state, batches)?;
    losses.disc = discriminator_update(state, batches, &fakes)?;
    state.iteration += 1;
    Ok(losses)
}
