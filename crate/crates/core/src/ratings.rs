//! Sparse rating data model and dataset ingestion.
//!
//! Ratings are integral stars in `1..=5`. External user/item ids are remapped
//! to dense 0-based indices at ingest (sorted by external id, so the mapping
//! is canonical); the bijection is retained for report output. The matrix is
//! immutable after construction and safe to share across threads.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use crate::{Error, Result};

pub const MIN_RATING: u8 = 1;
pub const MAX_RATING: u8 = 5;

/// Dense user index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UserId(pub u32);

/// Dense item index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ItemId(pub u32);

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Which dimension currently plays the "user" role.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    UserBased,
    ItemBased,
}

impl Orientation {
    fn flipped(self) -> Self {
        match self {
            Orientation::UserBased => Orientation::ItemBased,
            Orientation::ItemBased => Orientation::UserBased,
        }
    }
}

/// Sparse user × item star-rating matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingMatrix {
    orientation: Orientation,
    /// Per user: `(item, rating)` sorted by item.
    rows: Vec<Vec<(ItemId, u8)>>,
    /// Per item: `(user, rating)` sorted by user.
    cols: Vec<Vec<(UserId, u8)>>,
    /// Dense user index -> external id (ascending).
    users_ext: Vec<u64>,
    /// Dense item index -> external id (ascending).
    items_ext: Vec<u64>,
    n_entries: usize,
    rating_sum: u64,
    /// Per user: squared L2 norm of the rating vector.
    norms_sq: Vec<f64>,
}

/// Per-user aggregates used by similarity and prediction.
///
/// `mean_rating` is the user's average star rating; it is not used by the
/// cosine similarity (no mean-centering) and only serves as a prediction
/// fallback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserProfile {
    pub user: UserId,
    pub n_rated: usize,
    pub mean_rating: f64,
    pub l2_norm: f64,
}

impl RatingMatrix {
    /// Build a matrix from `(external_user, external_item, rating)` triples.
    ///
    /// Duplicate pairs are a hard error: silently overwriting corrupts the
    /// prediction ground truth.
    pub fn from_entries<I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u64, u64, u8)>,
    {
        let entries: Vec<(u64, u64, u8)> = entries.into_iter().collect();
        for &(u, i, r) in &entries {
            if !(MIN_RATING..=MAX_RATING).contains(&r) {
                return Err(Error::validation(format!(
                    "rating {r} for (user {u}, item {i}) outside {MIN_RATING}..={MAX_RATING}"
                )));
            }
        }

        let mut user_map = BTreeMap::new();
        let mut item_map = BTreeMap::new();
        for &(u, i, _) in &entries {
            user_map.entry(u).or_insert(0u32);
            item_map.entry(i).or_insert(0u32);
        }
        for (next, v) in user_map.values_mut().enumerate() {
            *v = next as u32;
        }
        for (next, v) in item_map.values_mut().enumerate() {
            *v = next as u32;
        }

        let n_users = user_map.len();
        let n_items = item_map.len();
        let mut rows: Vec<Vec<(ItemId, u8)>> = vec![Vec::new(); n_users];
        let mut cols: Vec<Vec<(UserId, u8)>> = vec![Vec::new(); n_items];
        for &(u, i, r) in &entries {
            let du = user_map[&u];
            let di = item_map[&i];
            rows[du as usize].push((ItemId(di), r));
            cols[di as usize].push((UserId(du), r));
        }
        for (du, row) in rows.iter_mut().enumerate() {
            row.sort_unstable_by_key(|&(i, _)| i);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                let dup = row
                    .windows(2)
                    .find(|w| w[0].0 == w[1].0)
                    .map(|w| w[0].0)
                    .unwrap();
                let ext_u = *user_map.iter().find(|(_, &v)| v as usize == du).unwrap().0;
                let ext_i = *item_map
                    .iter()
                    .find(|(_, &v)| v == dup.0)
                    .unwrap()
                    .0;
                return Err(Error::validation(format!(
                    "duplicate rating for (user {ext_u}, item {ext_i})"
                )));
            }
        }
        for col in &mut cols {
            col.sort_unstable_by_key(|&(u, _)| u);
        }

        let rating_sum = entries.iter().map(|&(_, _, r)| u64::from(r)).sum();
        let norms_sq = rows
            .iter()
            .map(|row| row.iter().map(|&(_, r)| f64::from(r) * f64::from(r)).sum())
            .collect();

        Ok(RatingMatrix {
            orientation: Orientation::UserBased,
            rows,
            cols,
            users_ext: user_map.into_keys().collect(),
            items_ext: item_map.into_keys().collect(),
            n_entries: entries.len(),
            rating_sum,
            norms_sq,
        })
    }

    pub fn n_users(&self) -> usize {
        self.rows.len()
    }

    pub fn n_items(&self) -> usize {
        self.cols.len()
    }

    pub fn n_entries(&self) -> usize {
        self.n_entries
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn users(&self) -> impl Iterator<Item = UserId> {
        (0..self.rows.len() as u32).map(UserId)
    }

    pub fn contains_user(&self, user: UserId) -> bool {
        (user.0 as usize) < self.rows.len()
    }

    /// The user's ratings, sorted by item id.
    pub fn user_ratings(&self, user: UserId) -> &[(ItemId, u8)] {
        &self.rows[user.0 as usize]
    }

    /// The item's ratings, sorted by user id.
    pub fn item_ratings(&self, item: ItemId) -> &[(UserId, u8)] {
        &self.cols[item.0 as usize]
    }

    pub fn rating(&self, user: UserId, item: ItemId) -> Option<u8> {
        let row = &self.rows[user.0 as usize];
        row.binary_search_by_key(&item, |&(i, _)| i)
            .ok()
            .map(|pos| row[pos].1)
    }

    pub fn external_user(&self, user: UserId) -> u64 {
        self.users_ext[user.0 as usize]
    }

    pub fn external_item(&self, item: ItemId) -> u64 {
        self.items_ext[item.0 as usize]
    }

    pub fn user_by_external(&self, ext: u64) -> Option<UserId> {
        self.users_ext
            .binary_search(&ext)
            .ok()
            .map(|pos| UserId(pos as u32))
    }

    pub fn item_by_external(&self, ext: u64) -> Option<ItemId> {
        self.items_ext
            .binary_search(&ext)
            .ok()
            .map(|pos| ItemId(pos as u32))
    }

    /// Squared L2 norm of the user's rating vector.
    pub fn norm_sq(&self, user: UserId) -> f64 {
        self.norms_sq[user.0 as usize]
    }

    /// Mean over every stored rating.
    pub fn global_mean(&self) -> f64 {
        if self.n_entries == 0 {
            0.0
        } else {
            self.rating_sum as f64 / self.n_entries as f64
        }
    }

    /// Sum of every stored rating.
    pub fn rating_sum(&self) -> u64 {
        self.rating_sum
    }

    pub fn user_profile(&self, user: UserId) -> UserProfile {
        let row = self.user_ratings(user);
        let n = row.len();
        let mean = if n == 0 {
            0.0
        } else {
            row.iter().map(|&(_, r)| f64::from(r)).sum::<f64>() / n as f64
        };
        UserProfile {
            user,
            n_rated: n,
            mean_rating: mean,
            l2_norm: self.norms_sq[user.0 as usize].sqrt(),
        }
    }

    /// Swap the user and item axes. Item-based filtering is user-based
    /// filtering on the transpose. Involutive: `m.transpose().transpose() == m`.
    pub fn transpose(&self) -> RatingMatrix {
        RatingMatrix {
            orientation: self.orientation.flipped(),
            rows: self
                .cols
                .iter()
                .map(|col| col.iter().map(|&(u, r)| (ItemId(u.0), r)).collect())
                .collect(),
            cols: self
                .rows
                .iter()
                .map(|row| row.iter().map(|&(i, r)| (UserId(i.0), r)).collect())
                .collect(),
            users_ext: self.items_ext.clone(),
            items_ext: self.users_ext.clone(),
            n_entries: self.n_entries,
            rating_sum: self.rating_sum,
            norms_sq: self
                .cols
                .iter()
                .map(|col| col.iter().map(|&(_, r)| f64::from(r) * f64::from(r)).sum())
                .collect(),
        }
    }

    /// Canonical CSV form: header `user,item,rating`, rows sorted by
    /// `(external user, external item)`. Re-ingesting the output reproduces
    /// the matrix, and serializing again is byte-identical.
    pub fn to_canonical_csv(&self) -> String {
        let mut out = String::from("user,item,rating\n");
        for (du, row) in self.rows.iter().enumerate() {
            let ext_u = self.users_ext[du];
            for &(item, r) in row {
                // rows are item-sorted by dense id; dense order == external order
                out.push_str(&format!("{},{},{}\n", ext_u, self.items_ext[item.0 as usize], r));
            }
        }
        out
    }
}

/// Ingest a MovieLens `u.data`-style file: one record per line, four
/// tab-separated integer fields `user_id item_id rating timestamp`.
/// Timestamps are discarded.
pub fn ingest_movielens(path: &Path) -> Result<RatingMatrix> {
    let file = File::open(path)?;
    ingest_movielens_reader(BufReader::new(file))
}

pub fn ingest_movielens_reader<R: Read>(reader: BufReader<R>) -> Result<RatingMatrix> {
    let mut entries = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let user = parse_field(fields.next(), lineno, "user_id")?;
        let item = parse_field(fields.next(), lineno, "item_id")?;
        let rating: u64 = parse_field(fields.next(), lineno, "rating")?;
        let _timestamp: u64 = parse_field(fields.next(), lineno, "timestamp")?;
        if fields.next().is_some() {
            return Err(Error::Parse {
                line: lineno,
                message: "expected exactly 4 tab-separated fields".into(),
            });
        }
        let rating = validate_rating(rating, lineno)?;
        entries.push((user, item, rating));
    }
    RatingMatrix::from_entries(entries)
}

/// Ingest an RFC-4180-style CSV with header `user,item,rating`.
/// Also covers Douban-format exports and synthetic data.
pub fn ingest_csv(path: &Path) -> Result<RatingMatrix> {
    let file = File::open(path)?;
    ingest_csv_reader(file)
}

pub fn ingest_csv_reader<R: Read>(reader: R) -> Result<RatingMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    {
        let headers = rdr.headers()?;
        let expected = ["user", "item", "rating"];
        let got: Vec<&str> = headers.iter().map(str::trim).collect();
        if got != expected {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header `user,item,rating`, got `{}`", got.join(",")),
            });
        }
    }
    let mut entries = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let lineno = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(0);
        if record.len() != 3 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 3 fields, got {}", record.len()),
            });
        }
        let user = parse_str_field(&record[0], lineno, "user")?;
        let item = parse_str_field(&record[1], lineno, "item")?;
        let rating: u64 = parse_str_field(&record[2], lineno, "rating")?;
        let rating = validate_rating(rating, lineno)?;
        entries.push((user, item, rating));
    }
    RatingMatrix::from_entries(entries)
}

fn validate_rating(rating: u64, lineno: usize) -> Result<u8> {
    if !(u64::from(MIN_RATING)..=u64::from(MAX_RATING)).contains(&rating) {
        return Err(Error::validation(format!(
            "line {lineno}: rating {rating} outside {MIN_RATING}..={MAX_RATING}"
        )));
    }
    Ok(rating as u8)
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, line: usize, name: &str) -> Result<T> {
    let raw = field.ok_or_else(|| Error::Parse {
        line,
        message: format!("missing field `{name}`"),
    })?;
    parse_str_field(raw, line, name)
}

fn parse_str_field<T: std::str::FromStr>(raw: &str, line: usize, name: &str) -> Result<T> {
    raw.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid `{name}` value `{raw}`"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Cursor;

    fn fixture() -> RatingMatrix {
        // 1 -> item 10: 4, 1 -> item 11: 3, 2 -> item 10: 5
        let data = "1\t10\t4\t0\n1\t11\t3\t0\n2\t10\t5\t0\n";
        ingest_movielens_reader(BufReader::new(Cursor::new(data))).unwrap()
    }

    #[test]
    fn three_line_fixture_counts() {
        let m = fixture();
        assert_eq!(m.n_users(), 2);
        assert_eq!(m.n_items(), 2);
        assert_eq!(m.n_entries(), 3);
        assert_eq!(m.rating(UserId(0), ItemId(0)), Some(4));
        assert_eq!(m.rating(UserId(0), ItemId(1)), Some(3));
        assert_eq!(m.rating(UserId(1), ItemId(0)), Some(5));
        assert_eq!(m.rating(UserId(1), ItemId(1)), None);
    }

    #[test]
    fn empty_file_gives_empty_matrix() {
        let m = ingest_movielens_reader(BufReader::new(Cursor::new(""))).unwrap();
        assert_eq!(m.n_entries(), 0);
        assert_eq!(m.n_users(), 0);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let data = "1\t10\t4\t0\n1\t11\txx\t0\n";
        let err = ingest_movielens_reader(BufReader::new(Cursor::new(data))).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_rating_rejected() {
        let data = "1\t10\t6\t0\n";
        let err = ingest_movielens_reader(BufReader::new(Cursor::new(data))).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err:?}");
        let csv = "user,item,rating\n1,10,6\n";
        let err = ingest_csv_reader(Cursor::new(csv)).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err:?}");
    }

    #[test]
    fn duplicate_pair_is_hard_error() {
        let data = "1\t10\t4\t0\n1\t10\t5\t0\n";
        let err = ingest_movielens_reader(BufReader::new(Cursor::new(data))).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err:?}");
    }

    #[test]
    fn csv_matches_movielens_fixture() {
        let csv = "user,item,rating\n1,10,4\n1,11,3\n2,10,5\n";
        let m = ingest_csv_reader(Cursor::new(csv)).unwrap();
        assert_eq!(m, fixture());
    }

    #[test]
    fn csv_empty_body_and_bad_header() {
        let m = ingest_csv_reader(Cursor::new("user,item,rating\n")).unwrap();
        assert_eq!(m.n_entries(), 0);
        let err = ingest_csv_reader(Cursor::new("a,b,c\n1,2,3\n")).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err:?}");
    }

    #[test]
    fn transpose_fixture() {
        let t = fixture().transpose();
        assert_eq!(t.orientation(), Orientation::ItemBased);
        assert_eq!(t.n_users(), 2); // items become users
        // (10,1)=4, (11,1)=3, (10,2)=5 in external ids
        let u10 = t.user_by_external(10).unwrap();
        let u11 = t.user_by_external(11).unwrap();
        let i1 = t.item_by_external(1).unwrap();
        let i2 = t.item_by_external(2).unwrap();
        assert_eq!(t.rating(u10, i1), Some(4));
        assert_eq!(t.rating(u11, i1), Some(3));
        assert_eq!(t.rating(u10, i2), Some(5));
    }

    #[test]
    fn canonical_csv_round_trips() {
        let m = fixture();
        let csv = m.to_canonical_csv();
        let m2 = ingest_csv_reader(Cursor::new(csv.as_bytes())).unwrap();
        assert_eq!(m, m2);
        assert_eq!(csv, m2.to_canonical_csv());
    }

    #[test]
    fn id_remap_is_a_bijection() {
        let m = fixture();
        for u in m.users() {
            assert_eq!(m.user_by_external(m.external_user(u)), Some(u));
        }
        for i in 0..m.n_items() as u32 {
            let i = ItemId(i);
            assert_eq!(m.item_by_external(m.external_item(i)), Some(i));
        }
    }

    #[test]
    fn profile_invariants() {
        let m = fixture();
        let p = m.user_profile(UserId(0));
        assert!((p.l2_norm * p.l2_norm - 25.0).abs() < 1e-9); // 16 + 9
        assert!((p.mean_rating - 3.5).abs() < 1e-12);
        assert_eq!(p.n_rated, 2);
    }

    proptest! {
        #[test]
        fn transpose_is_an_involution(pairs in proptest::collection::btree_set((0u64..30, 0u64..30), 1..60)) {
            let entries: Vec<(u64, u64, u8)> = pairs
                .into_iter()
                .enumerate()
                .map(|(n, (u, i))| (u, i, (n % 5) as u8 + 1))
                .collect();
            let m = RatingMatrix::from_entries(entries).unwrap();
            let tt = m.transpose().transpose();
            prop_assert_eq!(&m, &tt);
            prop_assert_eq!(m.transpose().n_entries(), m.n_entries());
        }
    }
}
