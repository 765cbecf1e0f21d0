use serde::{Deserialize, Serialize};

use crate::augment::{stack_view, ViewPolicy};
use crate::data::{LabelledSet, UnlabelledSet};
use crate::distill::{instance_loss, DistillHead, HeadConfig, Role};
use crate::error::{Error, Result};
use crate::nn::{ema_params, Gradients, LrSchedule, Network, OptimizerKind, OptimizerState, Params};
use crate::numerics::{normalize_rows, Matrix, Rng};
use crate::par::Exec;
use crate::prototypes::{
    assignment_entropy, bootstrap_uniform, category_loss, modal_fraction, weighted_cross_entropy,
    PrototypeBank, Target,
};

use super::config::{Ablation, NetworkConfig, Stage1Config};

/// Student, teacher and prototype bank after stage I.
#[derive(Clone, Debug)]
pub struct Stage1State {
    pub student: Network<f32>,
    pub teacher: Network<f32>,
    pub head: DistillHead<f32>,
    pub teacher_head: DistillHead<f32>,
    pub bank: Option<PrototypeBank<f32>>,
    pub steps: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub ins: f64,
    pub cat: f64,
    pub cls: f64,
    pub pas: f64,
    pub modal_fraction: f64,
    pub assignment_entropy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kmeans_acc: Option<f64>,
}

pub struct Stage1Inputs<'a> {
    pub labelled: &'a LabelledSet,
    pub unlabelled: &'a UnlabelledSet,
    pub n_base: usize,
    pub n_novel: usize,
    pub policy: &'a ViewPolicy,
}

fn add_into(acc: &mut Option<Vec<Vec<f32>>>, g: &Gradients<f32>) {
    match acc {
        None => *acc = Some(g.slices().iter().map(|s| s.to_vec()).collect()),
        Some(a) => {
            for (dst, src) in a.iter_mut().zip(g.slices()) {
                dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn train_stage1(
    exec: Exec,
    input: &Stage1Inputs<'_>,
    net_cfg: &NetworkConfig,
    cfg: &Stage1Config,
    head_cfg: &HeadConfig,
    ablation: Ablation,
    n_local: usize,
    seed: u64,
    mut on_epoch: impl FnMut(&Stage1State, &mut EpochLog) -> Result<()>,
) -> Result<Stage1State> {
    let (nl, nu) = (input.labelled.x.rows(), input.unlabelled.x.rows());
    let n = nl + nu;
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    let in_dim = input.labelled.x.cols().max(input.unlabelled.x.cols());
    let root = Rng::new(seed, 1);
    let mut widths = vec![in_dim];
    widths.extend(&net_cfg.hidden);
    widths.push(net_cfg.embed_dim);
    let student = Network::new(
        &widths,
        input.n_base + input.n_novel,
        input.n_base,
        net_cfg.activation,
        &mut root.child(0),
    )?;
    let head = DistillHead::new(net_cfg.embed_dim, *head_cfg, &mut root.child(1))?;
    let bank = if ablation.catdis && input.n_novel > 0 {
        Some(PrototypeBank::init_from_classifier(&student.novel_weights(), cfg.beta)?)
    } else {
        None
    };
    let mut st = Stage1State {
        teacher: student.clone(),
        teacher_head: head.clone(),
        student,
        head,
        bank,
        steps: 0,
    };

    let n_batches = n.div_ceil(cfg.batch_size);
    let schedule = LrSchedule {
        base_lr: cfg.lr(),
        warmup_steps: (cfg.warmup_epochs * n_batches) as u64,
        total_steps: (cfg.epochs * n_batches) as u64,
        floor_lr: cfg.min_lr,
    };
    let mut lengths: Vec<usize> = st.student.param_slices().iter().map(|s| s.len()).collect();
    lengths.extend(st.head.param_slices().iter().map(|s| s.len()));
    let mut opt = OptimizerState::new(OptimizerKind::adamw(cfg.weight_decay), &lengths);
    let all_x = Matrix::vstack(&[&input.labelled.x, &input.unlabelled.x])?;
    let n_views = if ablation.instdis { 2 + n_local } else { 1 };

    for epoch in 0..cfg.epochs {
        let mut erng = root.child(1000 + epoch as u64);
        let mut order: Vec<usize> = (0..n).collect();
        erng.shuffle(&mut order);
        let view_rng = erng.child(0);
        let mut log = EpochLog { epoch, ..Default::default() };
        let mut assigned: Vec<usize> = Vec::new();
        let mut lr_sum = 0.0;
        for (b, rows) in order.chunks(cfg.batch_size).enumerate() {
            let streams: Vec<u64> = rows.iter().map(|&r| r as u64).collect();
            let sets = input.policy.batch_views(exec, &all_x, rows, &streams, n_local, &view_rng)?;
            let views: Vec<Matrix<f32>> = (0..n_views).map(|v| stack_view(&sets, v)).collect::<Result<_>>()?;
            let fwd: Vec<_> = views.iter().map(|v| st.student.forward(v)).collect::<Result<_>>()?;
            let bs = rows.len();
            let d_zero = || Matrix::<f32>::zeros(bs, st.student.embed_dim());
            let mut d_feats: Vec<Matrix<f32>> = (0..n_views).map(|_| d_zero()).collect();
            let mut d_proj = Matrix::<f32>::zeros(st.head.out_dim(), st.head.projection.cols());
            let mut teacher_logits = Vec::new();

            if ablation.instdis {
                let student_probs: Vec<Matrix<f32>> = fwd
                    .iter()
                    .map(|f| Ok(st.head.forward(&f.features, Role::Student)?.probs))
                    .collect::<Result<_>>()?;
                let mut teacher_probs = Vec::with_capacity(2);
                for v in views.iter().take(2) {
                    let out = st.teacher_head.forward(&st.teacher.features(v)?, Role::Teacher)?;
                    teacher_probs.push(out.probs);
                    teacher_logits.push(out.logits);
                }
                let ins = instance_loss(&teacher_probs, &student_probs, head_cfg.student_temp)?;
                log.ins += ins.value;
                for (v, d) in ins.d_student_logits.iter().enumerate() {
                    let (df, dp) = st.head.backward(&fwd[v].features, d)?;
                    d_feats[v] = df;
                    d_proj.axpy(1.0, &dp)?;
                }
            }

            let logits = &fwd[0].logits;
            let mut d_protos = None;
            let d_logits = if let Some(bank) = st.bank.as_ref() {
                let unl: Vec<usize> = (0..bs).filter(|&i| rows[i] >= nl).collect();
                let unit = normalize_rows(&fwd[0].features.select_rows(&unl))?;
                let labels = if cfg.bootstrap.applies(epoch, b) {
                    bootstrap_uniform(unl.len(), input.n_novel, &mut erng)
                } else {
                    bank.assign(&unit)?.labels
                };
                let mut li = labels.iter();
                let targets: Vec<Target> = rows
                    .iter()
                    .map(|&r| {
                        if r < nl {
                            Target::Labelled(input.labelled.y[r])
                        } else {
                            Target::Pseudo(input.n_base + li.next().copied().unwrap_or(0))
                        }
                    })
                    .collect();
                let cat = category_loss(logits, &targets, input.n_base, cfg.lambda, bank.prototypes())?;
                log.cat += cat.value;
                log.cls += cat.cls;
                log.pas += cat.pas;
                assigned.extend(&labels);
                d_protos = Some((cat.d_protos, unit, labels));
                cat.d_logits
            } else {
                let lab: Vec<usize> = (0..bs).filter(|&i| rows[i] < nl).collect();
                let mut d = Matrix::zeros(bs, logits.cols());
                if !lab.is_empty() {
                    let y: Vec<usize> = lab.iter().map(|&i| input.labelled.y[rows[i]]).collect();
                    let ce = weighted_cross_entropy(&logits.select_rows(&lab), &y, None, lab.len() as f64)?;
                    log.cat += ce.value;
                    log.cls += ce.value;
                    for (k, &i) in lab.iter().enumerate() {
                        d.row_mut(i).copy_from_slice(ce.d_logits.row(k));
                    }
                }
                d
            };

            let mut acc = None;
            for (v, f) in fwd.iter().enumerate() {
                let dl = if v == 0 { d_logits.clone() } else { Matrix::zeros(bs, logits.cols()) };
                add_into(&mut acc, &st.student.backward(&f.tape, &d_feats[v], &dl)?);
            }
            let mut grads = acc.expect("at least one view");
            grads.push(d_proj.into_vec());
            let lr = schedule.lr_at(opt.steps());
            lr_sum += lr;
            {
                let mut params = st.student.param_slices_mut();
                params.extend(st.head.param_slices_mut());
                let g: Vec<&[f32]> = grads.iter().map(|g| &g[..]).collect();
                opt.step(&mut params, &g, lr)?;
            }
            if let (Some(bank), Some((dp, unit, labels))) = (st.bank.as_mut(), d_protos) {
                bank.ema_update(&unit, &labels)?;
                bank.apply_gradient(&dp, cfg.pas_lr)?;
            }
            if ablation.instdis {
                ema_params(&mut st.teacher, &st.student, cfg.teacher_momentum)?;
                ema_params(&mut st.teacher_head, &st.head, cfg.teacher_momentum)?;
                let refs: Vec<&Matrix<f32>> = teacher_logits.iter().collect();
                st.teacher_head.update_center(&Matrix::vstack(&refs)?)?;
            }
            st.steps += 1;
        }
        let nb = n_batches as f64;
        log.lr = lr_sum / nb;
        log.ins /= nb;
        log.cat /= nb;
        log.cls /= nb;
        log.pas /= nb;
        log.loss = log.ins + log.cat;
        if st.bank.is_some() {
            log.modal_fraction = modal_fraction(&assigned, input.n_novel);
            log.assignment_entropy = assignment_entropy(&assigned, input.n_novel);
        }
        on_epoch(&st, &mut log)?;
    }
    Ok(st)
}
