//! Bit-level model of the library, the users' caches and their demands.
//!
//! Every bit of the library has a global index `file * F + offset`. Caches and
//! outstanding requests are `NF x K` binary matrices indexed by (bit, user).
//! The single-packet decoding rule lives here as well: a user recovers a bit
//! from an XOR broadcast when it knows every other bit in the combination.

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimensions of the library and the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProblemInstance {
    num_files: usize,
    num_users: usize,
    file_bits: usize,
    cache_files: usize,
}

impl ProblemInstance {
    pub fn new(num_files: usize, num_users: usize, file_bits: usize, cache_files: usize) -> Result<Self> {
        if num_files == 0 {
            return Err(Error::InvalidInstance("N must be at least 1".into()));
        }
        if num_users == 0 {
            return Err(Error::InvalidInstance("K must be at least 1".into()));
        }
        if file_bits == 0 {
            return Err(Error::InvalidInstance("F must be at least 1".into()));
        }
        if cache_files > num_files {
            return Err(Error::InvalidInstance(format!(
                "cache exceeds library: M={cache_files} > N={num_files}"
            )));
        }
        Ok(Self {
            num_files,
            num_users,
            file_bits,
            cache_files,
        })
    }

    pub fn num_files(&self) -> usize {
        self.num_files
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn file_bits(&self) -> usize {
        self.file_bits
    }

    pub fn cache_files(&self) -> usize {
        self.cache_files
    }

    /// `N * F`.
    pub fn library_bits(&self) -> usize {
        self.num_files * self.file_bits
    }

    /// `M * F`.
    pub fn cache_capacity_bits(&self) -> usize {
        self.cache_files * self.file_bits
    }

    /// Length of the flattened observation, `3 N K F`.
    pub fn observation_len(&self) -> usize {
        3 * self.library_bits() * self.num_users
    }

    /// Length of the per-bit action vector, `N F`.
    pub fn action_len(&self) -> usize {
        self.library_bits()
    }

    pub fn bit(&self, file_index: usize, offset: usize) -> BitId {
        debug_assert!(file_index < self.num_files && offset < self.file_bits);
        BitId(file_index * self.file_bits + offset)
    }

    pub fn file_of(&self, bit: BitId) -> usize {
        bit.0 / self.file_bits
    }

    pub fn offset_of(&self, bit: BitId) -> usize {
        bit.0 % self.file_bits
    }

    /// Global indices of the bits of file `n`.
    pub fn file_range(&self, file_index: usize) -> std::ops::Range<usize> {
        file_index * self.file_bits..(file_index + 1) * self.file_bits
    }
}

impl fmt::Display for ProblemInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "N={} K={} F={} M={}",
            self.num_files, self.num_users, self.file_bits, self.cache_files
        )
    }
}

/// Global index of a library bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BitId(pub usize);

impl BitId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for BitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Dense `rows x cols` binary matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![false; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[bool] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn row_any(&self, row: usize) -> bool {
        self.row(row).iter().any(|&x| x)
    }

    pub fn col_count(&self, col: usize) -> usize {
        (0..self.rows).filter(|&r| self.get(r, col)).count()
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&x| x).count()
    }

    pub fn is_zero(&self) -> bool {
        !self.data.iter().any(|&x| x)
    }

    /// Row-major contents.
    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    /// Keeps only the listed rows, in the given order.
    pub fn select_rows(&self, rows: impl IntoIterator<Item = usize>) -> Self {
        let mut data = Vec::new();
        let mut n = 0;
        for r in rows {
            data.extend_from_slice(self.row(r));
            n += 1;
        }
        Self {
            rows: n,
            cols: self.cols,
            data,
        }
    }
}

/// Entry (b, i) is set iff user i caches global bit b.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheMatrix(BitMatrix);

impl CacheMatrix {
    pub fn empty(instance: &ProblemInstance) -> Self {
        Self(BitMatrix::zeros(instance.library_bits(), instance.num_users()))
    }

    /// Wraps an indicator matrix, checking its shape and the per-user capacity.
    pub fn from_matrix(instance: &ProblemInstance, matrix: BitMatrix) -> Result<Self> {
        if matrix.rows() != instance.library_bits() || matrix.cols() != instance.num_users() {
            return Err(Error::Dimension(format!(
                "cache matrix is {}x{}, expected {}x{}",
                matrix.rows(),
                matrix.cols(),
                instance.library_bits(),
                instance.num_users()
            )));
        }
        for user in 0..matrix.cols() {
            let used = matrix.col_count(user);
            if used > instance.cache_capacity_bits() {
                return Err(Error::InvalidInstance(format!(
                    "user {user} caches {used} bits, capacity is {}",
                    instance.cache_capacity_bits()
                )));
            }
        }
        Ok(Self(matrix))
    }

    #[inline]
    pub fn contains(&self, bit: BitId, user: usize) -> bool {
        self.0.get(bit.0, user)
    }

    pub fn matrix(&self) -> &BitMatrix {
        &self.0
    }

    /// The set `C_i` of user `user`.
    pub fn user_bits(&self, user: usize) -> BTreeSet<BitId> {
        (0..self.0.rows()).filter(|&b| self.0.get(b, user)).map(BitId).collect()
    }
}

/// Requested file of every user.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DemandVector(Vec<usize>);

impl DemandVector {
    pub fn new(instance: &ProblemInstance, demands: Vec<usize>) -> Result<Self> {
        if demands.len() != instance.num_users() {
            return Err(Error::Dimension(format!(
                "{} demands for {} users",
                demands.len(),
                instance.num_users()
            )));
        }
        if let Some(&d) = demands.iter().find(|&&d| d >= instance.num_files()) {
            return Err(Error::InvalidInstance(format!(
                "demand {d} outside library of {} files",
                instance.num_files()
            )));
        }
        Ok(Self(demands))
    }

    /// Distinct demands drawn uniformly; requires `K <= N`.
    pub fn random_distinct<R: Rng + ?Sized>(instance: &ProblemInstance, rng: &mut R) -> Result<Self> {
        if instance.num_users() > instance.num_files() {
            return Err(Error::Precondition(format!(
                "cannot draw {} distinct demands from {} files",
                instance.num_users(),
                instance.num_files()
            )));
        }
        let mut files: Vec<usize> = (0..instance.num_files()).collect();
        files.shuffle(rng);
        files.truncate(instance.num_users());
        Ok(Self(files))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn file_of(&self, user: usize) -> usize {
        self.0[user]
    }

    pub fn is_distinct(&self) -> bool {
        let set: BTreeSet<_> = self.0.iter().collect();
        set.len() == self.0.len()
    }
}

/// Entry (b, i) is set iff bit b is still owed to user i.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RequestMatrix(BitMatrix);

impl RequestMatrix {
    pub fn from_matrix(matrix: BitMatrix) -> Self {
        Self(matrix)
    }

    #[inline]
    pub fn needs(&self, bit: BitId, user: usize) -> bool {
        self.0.get(bit.0, user)
    }

    /// Marks (bit, user) delivered.
    pub fn clear(&mut self, bit: BitId, user: usize) {
        self.0.set(bit.0, user, false);
    }

    pub fn matrix(&self) -> &BitMatrix {
        &self.0
    }

    /// Number of outstanding (bit, user) pairs.
    pub fn outstanding_pairs(&self) -> usize {
        self.0.count_ones()
    }

    /// Bits (rows) that at least one user still needs, ascending.
    pub fn outstanding_rows(&self) -> Vec<BitId> {
        (0..self.0.rows()).filter(|&b| self.0.row_any(b)).map(BitId).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_zero()
    }

    /// The set `D_i` of user `user`.
    pub fn user_bits(&self, user: usize) -> BTreeSet<BitId> {
        (0..self.0.rows()).filter(|&b| self.0.get(b, user)).map(BitId).collect()
    }
}

/// One broadcast bit: the XOR of the listed library bits.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CodedPacket(Vec<BitId>);

impl CodedPacket {
    /// Sorts and deduplicates; XOR-ing a bit twice would cancel it, so a
    /// selection is a set.
    pub fn new(bits: impl IntoIterator<Item = BitId>) -> Self {
        let mut bits: Vec<BitId> = bits.into_iter().collect();
        bits.sort_unstable();
        bits.dedup();
        Self(bits)
    }

    pub fn bits(&self) -> &[BitId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, bit: BitId) -> bool {
        self.0.binary_search(&bit).is_ok()
    }
}

/// Caches and demands of one delivery phase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeliveryProblem {
    pub instance: ProblemInstance,
    pub cache: CacheMatrix,
    pub demands: DemandVector,
}

impl DeliveryProblem {
    pub fn new(instance: ProblemInstance, cache: CacheMatrix, demands: DemandVector) -> Result<Self> {
        if cache.matrix().rows() != instance.library_bits() || cache.matrix().cols() != instance.num_users() {
            return Err(Error::Dimension("cache does not match instance".into()));
        }
        if demands.as_slice().len() != instance.num_users() {
            return Err(Error::Dimension("demands do not match instance".into()));
        }
        Ok(Self {
            instance,
            cache,
            demands,
        })
    }

    pub fn requests(&self) -> RequestMatrix {
        outstanding_bits(&self.instance, &self.cache, &self.demands)
    }

    /// Restricts the problem to the requested files (`N' = K`).
    pub fn pruned(&self) -> Result<(DeliveryProblem, FileMap)> {
        let (instance, map) = prune_to_requested(&self.instance, &self.demands)?;
        let cache = map.prune_cache(&self.instance, &instance, &self.cache);
        let demands = DemandVector((0..instance.num_users()).collect());
        Ok((
            DeliveryProblem {
                instance,
                cache,
                demands,
            },
            map,
        ))
    }
}

/// Each user caches a uniformly random `M F`-subset of the library bits,
/// independently of the other users.
pub fn random_prefetch<R: Rng + ?Sized>(instance: &ProblemInstance, rng: &mut R) -> CacheMatrix {
    let mut m = BitMatrix::zeros(instance.library_bits(), instance.num_users());
    let capacity = instance.cache_capacity_bits();
    for user in 0..instance.num_users() {
        for b in index::sample(rng, instance.library_bits(), capacity) {
            m.set(b, user, true);
        }
    }
    CacheMatrix(m)
}

/// Segment placement: every file is cut into K equal segments and user i
/// caches segments `i, i+1, ..., i+M-1 (mod K)` of every file.
///
/// Only `N = K` with `F` divisible by `K` is supported.
pub fn mn_prefetch(instance: &ProblemInstance) -> Result<CacheMatrix> {
    let (n, k, f, m) = (
        instance.num_files(),
        instance.num_users(),
        instance.file_bits(),
        instance.cache_files(),
    );
    if n != k {
        return Err(Error::Config(format!("segment placement needs N = K, got N={n} K={k}")));
    }
    if f % k != 0 {
        return Err(Error::Config(format!(
            "segment placement needs F divisible by K, got F={f} K={k}"
        )));
    }
    if (m * k) % n != 0 {
        return Err(Error::Config(format!(
            "segment placement needs M*K divisible by N, got M={m} K={k} N={n}"
        )));
    }
    let seg = f / k;
    let mut mat = BitMatrix::zeros(instance.library_bits(), k);
    for user in 0..k {
        for j in 0..m {
            let segment = (user + j) % k;
            for file in 0..n {
                for off in segment * seg..(segment + 1) * seg {
                    mat.set(instance.bit(file, off).0, user, true);
                }
            }
        }
    }
    Ok(CacheMatrix(mat))
}

/// `D_i = W_{d_i} \ C_i` for every user.
pub fn outstanding_bits(instance: &ProblemInstance, cache: &CacheMatrix, demands: &DemandVector) -> RequestMatrix {
    let mut m = BitMatrix::zeros(instance.library_bits(), instance.num_users());
    for (user, &file) in demands.as_slice().iter().enumerate() {
        for b in instance.file_range(file) {
            if !cache.contains(BitId(b), user) {
                m.set(b, user, true);
            }
        }
    }
    RequestMatrix(m)
}

/// Single-packet decoding with caller-supplied predicates.
///
/// Returns the bit if exactly one bit of the packet is unknown and that bit
/// is outstanding.
#[inline]
pub fn decode_with(
    packet: &CodedPacket,
    is_known: impl Fn(BitId) -> bool,
    is_outstanding: impl Fn(BitId) -> bool,
) -> Option<BitId> {
    let mut unknown = None;
    for &b in packet.bits() {
        if !is_known(b) {
            if unknown.is_some() {
                return None;
            }
            unknown = Some(b);
        }
    }
    unknown.filter(|&b| is_outstanding(b))
}

/// Cancels the known bits of `packet` and returns the single remaining bit if
/// the user still needs it.
pub fn decode(packet: &CodedPacket, knowledge: &BTreeSet<BitId>, outstanding: &BTreeSet<BitId>) -> Option<BitId> {
    decode_with(packet, |b| knowledge.contains(&b), |b| outstanding.contains(&b))
}

/// Old-to-new file index map produced by [`prune_to_requested`].
///
/// The file requested by user `i` becomes file `i` of the reduced library.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileMap {
    new_to_old: Vec<usize>,
    old_to_new: Vec<Option<usize>>,
}

impl FileMap {
    pub fn new_to_old(&self, new: usize) -> usize {
        self.new_to_old[new]
    }

    pub fn old_to_new(&self, old: usize) -> Option<usize> {
        self.old_to_new[old]
    }

    pub fn is_identity(&self) -> bool {
        self.new_to_old.iter().enumerate().all(|(i, &o)| i == o) && self.old_to_new.len() == self.new_to_old.len()
    }

    /// Global rows of the original library kept by the reduction, in new order.
    pub fn kept_rows(&self, original: &ProblemInstance) -> Vec<usize> {
        self.new_to_old
            .iter()
            .flat_map(|&old| original.file_range(old))
            .collect()
    }

    pub fn prune_cache(
        &self,
        original: &ProblemInstance,
        reduced: &ProblemInstance,
        cache: &CacheMatrix,
    ) -> CacheMatrix {
        debug_assert_eq!(reduced.library_bits(), self.new_to_old.len() * original.file_bits());
        CacheMatrix(cache.matrix().select_rows(self.kept_rows(original)))
    }

    pub fn prune_requests(&self, original: &ProblemInstance, requests: &RequestMatrix) -> RequestMatrix {
        RequestMatrix(requests.matrix().select_rows(self.kept_rows(original)))
    }
}

/// Drops the files nobody requested. With distinct demands the reduced
/// library has exactly `K` files.
pub fn prune_to_requested(instance: &ProblemInstance, demands: &DemandVector) -> Result<(ProblemInstance, FileMap)> {
    if !demands.is_distinct() {
        return Err(Error::Precondition(format!(
            "demands must be distinct, got {:?}",
            demands.as_slice()
        )));
    }
    let k = instance.num_users();
    let mut old_to_new = vec![None; instance.num_files()];
    for (user, &file) in demands.as_slice().iter().enumerate() {
        old_to_new[file] = Some(user);
    }
    let reduced = ProblemInstance::new(k, k, instance.file_bits(), instance.cache_files().min(k))?;
    Ok((
        reduced,
        FileMap {
            new_to_old: demands.as_slice().to_vec(),
            old_to_new,
        },
    ))
}
