//! The arbitrary-partition model: `s` servers each hold `Aᵗ` with `A = Σ Aᵗ`, and the
//! AdaptiveCompress protocol, simulated in synchronous rounds with every word counted.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::constants::{DIST_PROJ_ROWS, DIST_SKETCH_ROWS};
use crate::error::{Error, Result};
use crate::lowrank::FactoredLowRank;
use crate::matrix::svd::svd_default;
use crate::matrix::DenseMatrix;
use crate::rng;
use crate::sketch::{make_sketch, SketchKind};

/// Server 0 plays the coordinator ("server 1" in the protocol description).
pub const COORDINATOR: usize = 0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    Seed(u64),
    Matrix(DenseMatrix),
}

impl Payload {
    /// One word per 64-bit number.
    pub fn words(&self) -> usize {
        match self {
            Payload::Seed(_) => 1,
            Payload::Matrix(m) => m.rows() * m.cols(),
        }
    }

    fn matrix(&self) -> Result<&DenseMatrix> {
        match self {
            Payload::Matrix(m) => Ok(m),
            Payload::Seed(_) => Err(Error::InvalidArgument("expected a matrix payload".into())),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Message {
    pub from: usize,
    pub to: usize,
    pub round: usize,
    pub tag: String,
    pub payload: Payload,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub from: usize,
    pub to: usize,
    pub round: usize,
    pub words: usize,
    pub tag: String,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct CommLedger {
    pub records: Vec<LedgerRecord>,
    pub total_words: usize,
}

impl CommLedger {
    fn log(&mut self, m: &Message) {
        let words = m.payload.words();
        self.total_words += words;
        self.records.push(LedgerRecord { from: m.from, to: m.to, round: m.round, words, tag: m.tag.clone() });
    }

    pub fn words_with_tag(&self, tag: &str) -> usize {
        self.records.iter().filter(|r| r.tag == tag).map(|r| r.words).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("from,to,round,words,tag\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{},{},{}", r.from, r.to, r.round, r.words, r.tag);
        }
        out
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ServerState {
    pub id: usize,
    pub share: DenseMatrix,
    pub seeds: Vec<u64>,
    /// `d x m'` with orthonormal columns.
    pub u: Option<DenseMatrix>,
    /// `m' x k` with orthonormal columns.
    pub v: Option<DenseMatrix>,
    /// `Aᵗ U V`, so the output is `Cᵗ = (Aᵗ U V)(U V)ᵀ`.
    pub output_left: Option<DenseMatrix>,
}

impl ServerState {
    /// `U V`, the common right factor of every server's output.
    pub fn basis(&self) -> Result<DenseMatrix> {
        match (&self.u, &self.v) {
            (Some(u), Some(v)) => u.matmul(v),
            _ => Err(Error::InvalidArgument(format!("server {} has not finished the protocol", self.id))),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub k: usize,
    pub eps: f64,
    pub seed: u64,
    /// Send `SA` and `P Aᵗ (SA)ᵀ` instead of `U` and `P Aᵗ U`.
    pub integer_safe: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProtocolRun {
    pub servers: Vec<ServerState>,
    pub ledger: CommLedger,
    /// Rows of the sign sketch `S` and of the embedding `P`.
    pub m: usize,
    pub p: usize,
}

impl ProtocolRun {
    /// `C = Σ Cᵗ` as `L · I · (UV)ᵀ`, with `L` reduced across servers in a holder-independent order.
    pub fn combined(&self) -> Result<FactoredLowRank> {
        let lefts = self
            .servers
            .iter()
            .map(|s| s.output_left.clone().ok_or(Error::InvalidArgument(format!("server {} has no output", s.id))))
            .collect::<Result<Vec<_>>>()?;
        let l = reduce_sum(&lefts)?;
        let b = self.servers[COORDINATOR].basis()?;
        let rank = b.cols();
        Ok(FactoredLowRank { l, u: DenseMatrix::identity(rank), r: b.transpose(), rank })
    }
}

/// Sketch sizes `m = ⌈C k/ε⌉` and `p = ⌈C k/ε³⌉`.
pub fn protocol_sizes(k: usize, eps: f64) -> (usize, usize) {
    let kf = k as f64;
    let m = (DIST_SKETCH_ROWS * kf / eps).ceil() as usize;
    let p = (DIST_PROJ_ROWS * kf / eps.powi(3)).ceil() as usize;
    (m.max(k), p.max(k))
}

/// Entrywise sum that adds each entry's terms in sorted order, so the result does not
/// depend on which server sent which term.
fn reduce_sum(terms: &[DenseMatrix]) -> Result<DenseMatrix> {
    let first = terms.first().ok_or(Error::InvalidArgument("nothing to sum".into()))?;
    let (r, c) = first.shape();
    if let Some(t) = terms.iter().find(|t| t.shape() != (r, c)) {
        return Err(Error::Dimension(format!("summing {:?} with {:?}", t.shape(), (r, c))));
    }
    let mut buf = vec![0.0; terms.len()];
    Ok(DenseMatrix::from_fn(r, c, |i, j| {
        for (b, t) in buf.iter_mut().zip(terms) {
            *b = t[(i, j)];
        }
        buf.sort_by(f64::total_cmp);
        buf.iter().sum()
    }))
}

/// Top-`k` right singular vectors of a sketched matrix, as a `d x k` basis.
pub fn sketch_svd_projection(sa: &DenseMatrix, k: usize) -> Result<DenseMatrix> {
    if k == 0 || sa.rows() < k {
        return Err(Error::InvalidArgument(format!("need 1 <= k <= {} sketch rows, got {k}", sa.rows())));
    }
    let f = svd_default(sa)?;
    if f.rank() < k {
        return Err(Error::RankDeficient(format!("sketch has rank {} < {k}", f.rank())));
    }
    Ok(f.truncate(k).v())
}

/// Synchronous point-to-point network. Messages to oneself are free and unlogged.
struct Network<'a> {
    ledger: CommLedger,
    tap: &'a mut dyn FnMut(&Message),
}

impl Network<'_> {
    fn send(&mut self, from: usize, to: usize, round: usize, tag: &str, payload: Payload) -> Payload {
        if from == to {
            return payload;
        }
        let msg = Message { from, to, round, tag: tag.to_string(), payload };
        (self.tap)(&msg);
        self.ledger.log(&msg);
        msg.payload
    }
}

/// Orthonormal row-space basis `U` of `SA` together with the map `(SA)ᵀ ↦ U`,
/// i.e. `W` with `(SA)ᵀ W = U`.
fn row_basis(sa: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    let f = svd_default(sa)?;
    let inv: Vec<f64> = f.sigma.iter().map(|s| 1.0 / s).collect();
    Ok((f.v(), f.u.scale_cols(&inv)))
}

pub fn adaptive_compress(shares: &[DenseMatrix], params: ProtocolParams) -> Result<ProtocolRun> {
    adaptive_compress_tapped(shares, params, &mut |_| {})
}

/// As [`adaptive_compress`], handing every transmitted message to `tap` as it is sent.
pub fn adaptive_compress_tapped(
    shares: &[DenseMatrix],
    params: ProtocolParams,
    tap: &mut dyn FnMut(&Message),
) -> Result<ProtocolRun> {
    let ProtocolParams { k, eps, seed, integer_safe } = params;
    let first = shares.first().ok_or(Error::InvalidArgument("at least one server is required".into()))?;
    let (n, d) = first.shape();
    if let Some((t, a)) = shares.iter().enumerate().find(|(_, a)| a.shape() != (n, d)) {
        return Err(Error::Dimension(format!("server {t} holds {:?}, server 0 holds {:?}", a.shape(), (n, d))));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0,1], got {eps}")));
    }
    if k == 0 || k > d.min(n) {
        return Err(Error::InvalidArgument(format!("need 1 <= k <= {}, got {k}", d.min(n))));
    }
    let (m, p) = protocol_sizes(k, eps);
    let s = shares.len();
    let mut servers: Vec<ServerState> = shares
        .iter()
        .enumerate()
        .map(|(id, a)| ServerState { id, share: a.clone(), seeds: Vec::new(), u: None, v: None, output_left: None })
        .collect();
    let mut net = Network { ledger: CommLedger::default(), tap };

    // Steps 1-2: seed for S, then S Aᵗ to the coordinator.
    let seed_s = rng::derive(seed, 1);
    let mut uploads = Vec::with_capacity(s);
    for srv in servers.iter_mut() {
        let got = net.send(COORDINATOR, srv.id, 1, "seed_s", Payload::Seed(seed_s));
        let Payload::Seed(sd) = got else { unreachable!() };
        srv.seeds.push(sd);
        let sk = make_sketch(SketchKind::Sign, m, n, sd)?;
        let sat = sk.apply(&srv.share)?;
        uploads.push(net.send(srv.id, COORDINATOR, 2, "sketch_upload", Payload::Matrix(sat)));
    }

    // Step 3: the coordinator forms SA and shares U (or SA itself).
    let sa = reduce_sum(&uploads.iter().map(|p| p.matrix().cloned()).collect::<Result<Vec<_>>>()?)?;
    let (u, _) = row_basis(&sa)?;
    if u.cols() < k {
        return Err(Error::RankDeficient(format!("SA has rank {} < {k}", u.cols())));
    }
    let mut to_basis = Vec::with_capacity(s);
    for srv in servers.iter_mut() {
        if integer_safe {
            let got = net.send(COORDINATOR, srv.id, 3, "sa_broadcast", Payload::Matrix(sa.clone()));
            let (ub, w) = row_basis(got.matrix()?)?;
            srv.u = Some(ub);
            to_basis.push(w);
        } else {
            let got = net.send(COORDINATOR, srv.id, 3, "u_broadcast", Payload::Matrix(u.clone()));
            srv.u = Some(got.matrix()?.clone());
        }
    }

    // Steps 5-7: seed for P, then P Aᵗ U (or P Aᵗ (SA)ᵀ) to the coordinator.
    let seed_p = rng::derive(seed, 2);
    let mut uploads = Vec::with_capacity(s);
    for srv in servers.iter_mut() {
        let got = net.send(COORDINATOR, srv.id, 5, "seed_p", Payload::Seed(seed_p));
        let Payload::Seed(sd) = got else { unreachable!() };
        srv.seeds.push(sd);
        let pk = make_sketch(SketchKind::Sign, p, n, sd)?;
        let pa = pk.apply(&srv.share)?;
        let (tag, msg) = if integer_safe {
            ("p_sa_upload", pa.matmul_t(&sa)?)
        } else {
            ("pu_upload", pa.matmul(srv.u.as_ref().expect("set in round 3"))?)
        };
        uploads.push(net.send(srv.id, COORDINATOR, 7, tag, Payload::Matrix(msg)));
    }

    // Step 8: V from the top-k right singular vectors of P A U.
    let summed = reduce_sum(&uploads.iter().map(|p| p.matrix().cloned()).collect::<Result<Vec<_>>>()?)?;
    if integer_safe {
        for (t, srv) in servers.iter_mut().enumerate() {
            let got = net.send(COORDINATOR, srv.id, 8, "p_sa_broadcast", Payload::Matrix(summed.clone()));
            let pau = got.matrix()?.matmul(&to_basis[t])?;
            srv.v = Some(sketch_svd_projection(&pau, k)?);
        }
    } else {
        let v = sketch_svd_projection(&summed, k)?;
        for srv in servers.iter_mut() {
            let got = net.send(COORDINATOR, srv.id, 8, "v_broadcast", Payload::Matrix(v.clone()));
            srv.v = Some(got.matrix()?.clone());
        }
    }

    // Step 9: local outputs.
    for srv in servers.iter_mut() {
        let b = srv.basis()?;
        srv.output_left = Some(srv.share.matmul(&b)?);
    }
    Ok(ProtocolRun { servers, ledger: net.ledger, m, p })
}

/// Splits `a` into `s` random shares summing to `a`: Gaussian noise shares plus a balancing last share.
pub fn random_shares(a: &DenseMatrix, s: usize, seed: u64) -> Result<Vec<DenseMatrix>> {
    if s == 0 {
        return Err(Error::InvalidArgument("need at least one share".into()));
    }
    let (n, d) = a.shape();
    let scale = a.frobenius_norm() / ((n * d) as f64).sqrt().max(1.0);
    let mut g = rng::seeded(seed, 71);
    let mut rest = a.clone();
    let mut out = Vec::with_capacity(s);
    for _ in 1..s {
        let sh = DenseMatrix::from_fn(n, d, |_, _| scale * rng::normal(&mut g));
        rest = rest.sub(&sh)?;
        out.push(sh);
    }
    out.push(rest);
    Ok(out)
}
