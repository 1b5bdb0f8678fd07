//! f64 re-implementation of the test networks, shared by the gradient
//! checks and the acceptance suite.

#![allow(dead_code)]

use emlab_core::autodiff::{Graph, ParamStore, Var};
use emlab_core::nn::{sample_gumbel, CellKind, Embedding, Linear, Mlp, Rnn, RnnLayer};
use emlab_core::rng::seeded;
use emlab_core::tensor::Tensor;
use emlab_core::Result;
use rand::Rng;

#[derive(Clone, Debug)]
pub struct M {
    pub r: usize,
    pub c: usize,
    pub d: Vec<f64>,
}

impl M {
    pub fn of(t: &Tensor) -> M {
        let (r, c) = if t.shape().len() == 2 { (t.rows(), t.cols()) } else { (1, t.len()) };
        M { r, c, d: t.data().iter().map(|&v| f64::from(v)).collect() }
    }

    pub fn zeros(r: usize, c: usize) -> M {
        M { r, c, d: vec![0.0; r * c] }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.c + j]
    }

    pub fn matmul(&self, o: &M) -> M {
        assert_eq!(self.c, o.r);
        let mut out = M::zeros(self.r, o.c);
        for i in 0..self.r {
            for j in 0..o.c {
                out.d[i * o.c + j] = (0..self.c).map(|k| self.at(i, k) * o.at(k, j)).sum();
            }
        }
        out
    }

    pub fn matmul_nt(&self, o: &M) -> M {
        let mut out = M::zeros(self.r, o.r);
        for i in 0..self.r {
            for j in 0..o.r {
                out.d[i * o.r + j] = (0..self.c).map(|k| self.at(i, k) * o.at(j, k)).sum();
            }
        }
        out
    }

    pub fn zip(&self, o: &M, f: impl Fn(f64, f64) -> f64) -> M {
        assert_eq!((self.r, self.c), (o.r, o.c));
        M { r: self.r, c: self.c, d: self.d.iter().zip(&o.d).map(|(&a, &b)| f(a, b)).collect() }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> M {
        M { r: self.r, c: self.c, d: self.d.iter().map(|&a| f(a)).collect() }
    }

    pub fn add_row(&self, b: &M) -> M {
        M { r: self.r, c: self.c, d: self.d.iter().enumerate().map(|(i, &a)| a + b.d[i % self.c]).collect() }
    }

    pub fn cols(&self, start: usize, len: usize) -> M {
        let mut out = M::zeros(self.r, len);
        for i in 0..self.r {
            for j in 0..len {
                out.d[i * len + j] = self.at(i, start + j);
            }
        }
        out
    }

    pub fn rows(&self, start: usize, len: usize) -> M {
        M { r: len, c: self.c, d: self.d[start * self.c..(start + len) * self.c].to_vec() }
    }

    pub fn softmax(&self) -> M {
        let mut out = self.clone();
        for row in out.d.chunks_mut(self.c) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = row.iter().map(|v| (v - m).exp()).sum();
            row.iter_mut().for_each(|v| *v = (*v - m).exp() / s);
        }
        out
    }

    pub fn sum(&self) -> f64 {
        self.d.iter().sum()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn ref_affine(p: &[M], l: &Linear, x: &M) -> M {
    x.matmul(&p[l.weight.0]).add_row(&p[l.bias.0])
}

pub fn ref_mlp(p: &[M], mlp: &Mlp, x: &M) -> M {
    let mut h = ref_affine(p, &mlp.layers[0], x);
    for l in &mlp.layers[1..] {
        h = ref_affine(p, l, &h.map(f64::tanh));
    }
    h
}

/// Textbook recurrences: GRU with the reset gate applied to the projected
/// hidden state, LSTM with gates `[i | f | g | o]`.
pub fn ref_cell(p: &[M], l: &RnnLayer, x: &M, h: &M, c: Option<&M>) -> (M, Option<M>) {
    let gx = x.matmul(&p[l.w_input.0]).add_row(&p[l.b_input.0]);
    let gh = h.matmul(&p[l.w_hidden.0]).add_row(&p[l.b_hidden.0]);
    let n = l.hidden;
    match l.kind {
        CellKind::Elman => (gx.zip(&gh, |a, b| (a + b).tanh()), None),
        CellKind::Gru => {
            let r = gx.cols(0, n).zip(&gh.cols(0, n), |a, b| sigmoid(a + b));
            let z = gx.cols(n, n).zip(&gh.cols(n, n), |a, b| sigmoid(a + b));
            let cand = gx.cols(2 * n, n).zip(&r.zip(&gh.cols(2 * n, n), |a, b| a * b), |a, b| (a + b).tanh());
            let one_minus_z = z.map(|v| 1.0 - v);
            (one_minus_z.zip(&cand, |a, b| a * b).zip(&z.zip(h, |a, b| a * b), |a, b| a + b), None)
        }
        CellKind::Lstm => {
            let s = gx.zip(&gh, |a, b| a + b);
            let i = s.cols(0, n).map(sigmoid);
            let f = s.cols(n, n).map(sigmoid);
            let g = s.cols(2 * n, n).map(f64::tanh);
            let o = s.cols(3 * n, n).map(sigmoid);
            let c2 = f.zip(c.unwrap(), |a, b| a * b).zip(&i.zip(&g, |a, b| a * b), |a, b| a + b);
            (o.zip(&c2.map(f64::tanh), |a, b| a * b), Some(c2))
        }
    }
}

pub fn ref_rnn_step(p: &[M], rnn: &Rnn, x: &M, h: &mut [M], c: &mut [Option<M>]) -> M {
    let mut inp = x.clone();
    for (l, layer) in rnn.layers.iter().enumerate() {
        let (h2, c2) = ref_cell(p, layer, &inp, &h[l], c[l].as_ref());
        h[l] = h2.clone();
        c[l] = c2;
        inp = h2;
    }
    inp
}

pub fn ref_state(rnn: &Rnn, h0: &M) -> (Vec<M>, Vec<Option<M>>) {
    let n = rnn.layers.len();
    let c = if rnn.kind == CellKind::Lstm { Some(M::zeros(h0.r, h0.c)) } else { None };
    (vec![h0.clone(); n], vec![c; n])
}

pub fn ref_cross_entropy(logits: &M, targets: &[usize]) -> f64 {
    let p = logits.softmax();
    targets.iter().enumerate().map(|(i, &t)| -p.at(i, t).ln()).sum::<f64>() / targets.len() as f64
}

pub type Forward = Box<dyn Fn(&mut Graph<'_>) -> Result<Var>>;
pub type RefForward = Box<dyn Fn(&[M]) -> f64>;

pub fn rand_tensor<R: Rng>(shape: &[usize], rng: &mut R) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

pub fn pick_cell<R: Rng>(rng: &mut R) -> CellKind {
    [CellKind::Gru, CellKind::Lstm, CellKind::Elman][rng.gen_range(0..3)]
}

pub fn weighted_sum(g: &mut Graph<'_>, out: Var, w: &Tensor) -> Result<Var> {
    let w = g.constant(w.clone())?;
    let p = g.mul(out, w)?;
    g.sum(p)
}

pub fn build(kind: usize, seed: u64) -> (ParamStore, Forward, RefForward) {
    let rng = &mut seeded(seed);
    let mut store = ParamStore::new();
    let (f, r): (Forward, RefForward) = match kind {
        0 => {
            let (b, i, o) = (rng.gen_range(2..4), rng.gen_range(2..5), rng.gen_range(2..4));
            let mlp = Mlp::new(&mut store, "mlp", i, o, rng.gen_range(0..3), rng);
            let x = rand_tensor(&[b, i], rng);
            let targets: Vec<usize> = (0..b).map(|_| rng.gen_range(0..o)).collect();
            let (mlp2, x2, t2) = (mlp.clone(), M::of(&x), targets.clone());
            (
                Box::new(move |g| {
                    let x = g.constant(x.clone())?;
                    let y = mlp.forward(g, x)?;
                    g.cross_entropy(y, &targets)
                }),
                Box::new(move |p| ref_cross_entropy(&ref_mlp(p, &mlp2, &x2), &t2)),
            )
        }
        1 => {
            let (b, t, i, h) = (2, rng.gen_range(2..4), 1, 2);
            let layers = rng.gen_range(1..3);
            let rnn = Rnn::new(&mut store, "rnn", pick_cell(rng), layers, i, h, rng).unwrap();
            let out = Linear::new(&mut store, "out", h, 3, rng);
            let x = rand_tensor(&[t * b, i], rng);
            let h0 = rand_tensor(&[b, h], rng);
            let targets: Vec<usize> = (0..t * b).map(|_| rng.gen_range(0..3)).collect();
            let (rnn2, out2, x2, h02, t2) = (rnn.clone(), out.clone(), M::of(&x), M::of(&h0), targets.clone());
            (
                Box::new(move |g| {
                    let x = g.constant(x.clone())?;
                    let s = rnn.state_from(g, &h0)?;
                    let (ys, _) = rnn.run_sequence(g, x, b, &s)?;
                    let logits = out.forward(g, ys)?;
                    g.cross_entropy(logits, &targets)
                }),
                Box::new(move |p| {
                    let (mut hs, mut cs) = ref_state(&rnn2, &h02);
                    let mut logits = Vec::new();
                    for step in 0..t {
                        let y = ref_rnn_step(p, &rnn2, &x2.rows(step * b, b), &mut hs, &mut cs);
                        logits.extend(ref_affine(p, &out2, &y).d);
                    }
                    ref_cross_entropy(&M { r: t * b, c: 3, d: logits }, &t2)
                }),
            )
        }
        2 => {
            // Receiver-shaped: embedded ids through a stepped RNN, scored
            // against MLP-encoded candidates.
            let (b, group, a, h, v) = (2, 3, 3, 2, 4);
            let emb = Embedding::new(&mut store, "emb", v, 2, rng);
            let rnn = Rnn::new(&mut store, "rnn", pick_cell(rng), 1, 2, h, rng).unwrap();
            let enc = Mlp::new(&mut store, "enc", a, h, 1, rng);
            let ids: Vec<Vec<usize>> = (0..2).map(|_| (0..b).map(|_| rng.gen_range(0..v)).collect()).collect();
            let cands = rand_tensor(&[b * group, a], rng);
            let targets: Vec<usize> = (0..b).map(|_| rng.gen_range(0..group)).collect();
            let (emb2, rnn2, enc2, ids2, c2, t2) =
                (emb.clone(), rnn.clone(), enc.clone(), ids.clone(), M::of(&cands), targets.clone());
            (
                Box::new(move |g| {
                    let mut s = rnn.zero_state(g, b)?;
                    let mut top = None;
                    for step in &ids {
                        let x = emb.lookup(g, step)?;
                        let (y, next) = rnn.step(g, x, &s)?;
                        s = next;
                        top = Some(y);
                    }
                    let c = g.constant(cands.clone())?;
                    let c = enc.forward(g, c)?;
                    let scores = g.group_dot(top.unwrap(), c, group)?;
                    g.cross_entropy(scores, &targets)
                }),
                Box::new(move |p| {
                    let (mut hs, mut cs) = ref_state(&rnn2, &M::zeros(b, h));
                    let table = &p[emb2.table.0];
                    let mut top = M::zeros(b, h);
                    for step in &ids2 {
                        let x = M { r: b, c: 2, d: step.iter().flat_map(|&i| table.rows(i, 1).d).collect() };
                        top = ref_rnn_step(p, &rnn2, &x, &mut hs, &mut cs);
                    }
                    let c = ref_mlp(p, &enc2, &c2);
                    let mut scores = M::zeros(b, group);
                    for i in 0..b {
                        for j in 0..group {
                            scores.d[i * group + j] = (0..h).map(|k| top.at(i, k) * c.at(i * group + j, k)).sum();
                        }
                    }
                    ref_cross_entropy(&scores, &t2)
                }),
            )
        }
        3 => {
            // Sender-shaped: MLP initial state, Gumbel relaxation, embedding mix.
            let (b, a, h, v) = (2, 3, 2, 3);
            let enc = Mlp::new(&mut store, "enc", a, h, 1, rng);
            let rnn = Rnn::new(&mut store, "rnn", pick_cell(rng), 1, 2, h, rng).unwrap();
            let out = Linear::new(&mut store, "out", h, v, rng);
            let emb = Embedding::new(&mut store, "emb", v, 2, rng);
            let obs = rand_tensor(&[b, a], rng);
            let noise: Vec<Tensor> = (0..2).map(|_| sample_gumbel(&[b, v], rng)).collect();
            let tau: f32 = rng.gen_range(0.5..2.0);
            let w = rand_tensor(&[b, v], rng);
            let (enc2, rnn2, out2, emb2) = (enc.clone(), rnn.clone(), out.clone(), emb.clone());
            let (obs2, noise2, w2) = (M::of(&obs), noise.iter().map(M::of).collect::<Vec<_>>(), M::of(&w));
            (
                Box::new(move |g| {
                    let o = g.constant(obs.clone())?;
                    let h0 = enc.forward(g, o)?;
                    let mut s = rnn.state_from_var(g, h0)?;
                    let mut x = g.constant(Tensor::zeros(&[b, 2]))?;
                    let mut acc = None;
                    for n in &noise {
                        let (y, next) = rnn.step(g, x, &s)?;
                        s = next;
                        let logits = out.forward(g, y)?;
                        let p = g.gumbel_softmax(logits, n, tau)?;
                        x = emb.mix(g, p)?;
                        acc = Some(match acc {
                            None => p,
                            Some(a) => g.add(a, p)?,
                        });
                    }
                    weighted_sum(g, acc.unwrap(), &w)
                }),
                Box::new(move |p| {
                    let h0 = ref_mlp(p, &enc2, &obs2);
                    let (mut hs, mut cs) = ref_state(&rnn2, &h0);
                    let mut x = M::zeros(b, 2);
                    let mut acc = M::zeros(b, v);
                    for n in &noise2 {
                        let y = ref_rnn_step(p, &rnn2, &x, &mut hs, &mut cs);
                        let logits = ref_affine(p, &out2, &y);
                        let probs = logits.zip(n, |l, g| (l + g) / f64::from(tau)).softmax();
                        x = probs.matmul(&p[emb2.table.0]);
                        acc = acc.zip(&probs, |a, b| a + b);
                    }
                    acc.zip(&w2, |a, b| a * b).sum()
                }),
            )
        }
        _ => {
            // Elementwise and structural ops.
            let (r, c) = (3, 4);
            let a = store.add("a", rand_tensor(&[r, c], rng));
            let bm = store.add("b", rand_tensor(&[r, c], rng));
            let bias = store.add("bias", rand_tensor(&[1, c], rng));
            let k: f32 = rng.gen_range(0.5..2.0);
            let w = rand_tensor(&[2 * r, 2], rng);
            let w2 = M::of(&w);
            (
                Box::new(move |g| {
                    let (a, bm, bias) = (g.param(a), g.param(bm), g.param(bias));
                    let ab = g.matmul_nt(a, bm)?;
                    let sm = g.softmax_rows(ab)?;
                    let sg = g.sigmoid(a)?;
                    let om = g.one_minus(sg)?;
                    let t = g.tanh(bm)?;
                    let d = g.sub(om, t)?;
                    let d = g.add_row(d, bias)?;
                    let d = g.scale(d, k)?;
                    let d = g.add_scalar(d, 0.3)?;
                    let m = g.matmul(sm, d)?;
                    let left = g.slice_cols(m, 1, 2)?;
                    let top = g.slice_rows(d, 0, r)?;
                    let right = g.slice_cols(top, 0, 2)?;
                    let cat = g.concat_rows(&[left, right])?;
                    let flat = g.reshape(cat, vec![4 * r])?;
                    let back = g.reshape(flat, vec![2 * r, 2])?;
                    let s = weighted_sum(g, back, &w)?;
                    let mean = g.mean(d)?;
                    g.add(s, mean)
                }),
                Box::new(move |p| {
                    let (pa, pb, pbias) = (&p[a.0], &p[bm.0], &p[bias.0]);
                    let sm = pa.matmul_nt(pb).softmax();
                    let d = pa
                        .map(|x| 1.0 - sigmoid(x))
                        .zip(&pb.map(f64::tanh), |x, y| x - y)
                        .add_row(pbias)
                        .map(|x| x * f64::from(k) + 0.3);
                    let m = sm.matmul(&d);
                    let mut cat = m.cols(1, 2).d;
                    cat.extend(d.rows(0, r).cols(0, 2).d);
                    let cat = M { r: 2 * r, c: 2, d: cat };
                    cat.zip(&w2, |x, y| x * y).sum() + d.sum() / d.d.len() as f64
                }),
            )
        }
    };
    (store, f, r)
}

/// Central difference of the f64 reference at step `h`.
pub fn numeric_grads(params: &[M], r: &RefForward, h: f64) -> Vec<Vec<f64>> {
    let mut p = params.to_vec();
    let mut out = Vec::new();
    for i in 0..p.len() {
        let mut gi = Vec::new();
        for k in 0..p[i].d.len() {
            let x0 = p[i].d[k];
            p[i].d[k] = x0 + h;
            let up = r(&p);
            p[i].d[k] = x0 - h;
            let down = r(&p);
            p[i].d[k] = x0;
            gi.push((up - down) / (2.0 * h));
        }
        out.push(gi);
    }
    out
}

/// Outcome of checking one random network.
pub struct NetworkCheck {
    pub n_params: usize,
    pub loss: f64,
    pub ref_loss: f64,
    /// ‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖) over all parameters.
    pub rel_err: f64,
}

/// Builds network `n` of the standard family of 50 and compares gradients.
pub fn check_network(n: u64) -> NetworkCheck {
    let (store, f, r) = build(n as usize % 5, 1000 + n);
    let params: Vec<M> = store.tensors().iter().map(M::of).collect();
    let (loss, analytic) = {
        let mut g = Graph::new(&store);
        let l = f(&mut g).unwrap();
        (f64::from(g.value(l).item().unwrap()), g.backward(l).unwrap())
    };
    let numeric = numeric_grads(&params, &r, 1e-3);
    let (mut diff2, mut a2, mut n2) = (0.0f64, 0.0f64, 0.0f64);
    for (t, num) in analytic.tensors().iter().zip(&numeric) {
        for (&a, &num) in t.data().iter().zip(num) {
            let a = f64::from(a);
            diff2 += (a - num).powi(2);
            a2 += a * a;
            n2 += num * num;
        }
    }
    NetworkCheck {
        n_params: store.num_values(),
        loss,
        ref_loss: r(&params),
        rel_err: diff2.sqrt() / a2.sqrt().max(n2.sqrt()).max(1e-12),
    }
}
