#include <doctest.h>

#include <cmath>

#include "modx/errors.hpp"
#include "modx/numeric.hpp"
#include "oracles.hpp"

using namespace modx;

TEST_CASE("l2_normalize_rows examples") {
  CHECK(l2_normalize_rows(Matrix::from_rows({{3, 4}})).mat() == Matrix::from_rows({{0.6, 0.8}}));
  CHECK(l2_normalize_rows(Matrix::identity(2)).mat() == Matrix::identity(2));
  CHECK(l2_normalize_rows(Matrix::from_rows({{1, 1, 1, 1}})).mat() == Matrix::from_rows({{0.5, 0.5, 0.5, 0.5}}));
}

TEST_CASE("l2_normalize_rows rejects a zero row") {
  CHECK_THROWS_AS(l2_normalize_rows(Matrix::from_rows({{1, 0}, {0, 0}})), DegenerateRow);
  CHECK_THROWS_AS(l2_normalize_rows(Matrix::from_rows({{1e-13, 0}})), DegenerateRow);
}

TEST_CASE("from_unit_rows validates norms") {
  CHECK_NOTHROW(UnitEmbeddings::from_unit_rows(Matrix::from_rows({{0.6, 0.8}})));
  CHECK_THROWS_AS(UnitEmbeddings::from_unit_rows(Matrix::from_rows({{0.6, 0.9}})), DegenerateRow);
}

TEST_CASE("cosine_matrix examples") {
  const auto id = UnitEmbeddings::from_unit_rows(Matrix::identity(2));
  CHECK(cosine_matrix(id, id) == Matrix::identity(2));
  const auto a = UnitEmbeddings::from_unit_rows(Matrix::from_rows({{1, 0}}));
  const auto b = UnitEmbeddings::from_unit_rows(Matrix::from_rows({{-1, 0}}));
  const auto c = UnitEmbeddings::from_unit_rows(Matrix::from_rows({{0.6, 0.8}}));
  CHECK(cosine_matrix(a, b) == Matrix::from_rows({{-1}}));
  CHECK(cosine_matrix(a, c) == Matrix::from_rows({{0.6}}));
}

TEST_CASE("cosine_matrix rejects differing dims and accepts differing counts") {
  Rng rng(3);
  const auto v = l2_normalize_rows(oracle::random_matrix(3, 4, rng));
  const auto l = l2_normalize_rows(oracle::random_matrix(5, 4, rng));
  const auto w = l2_normalize_rows(oracle::random_matrix(5, 3, rng));
  CHECK(cosine_matrix(v, l).rows() == 3);
  CHECK(cosine_matrix(v, l).cols() == 5);
  CHECK_THROWS_AS(cosine_matrix(v, w), DimensionMismatch);
}

TEST_CASE("cosine_matrix transpose symmetry and unit diagonal") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto v = l2_normalize_rows(oracle::random_matrix(6, 5, rng));
    const auto l = l2_normalize_rows(oracle::random_matrix(7, 5, rng));
    CHECK(max_abs_diff(cosine_matrix(v, l).transpose(), cosine_matrix(l, v)) <= 1e-12);
    const Matrix self = cosine_matrix(v, v);
    for (std::size_t i = 0; i < self.rows(); ++i) CHECK(std::abs(self(i, i) - 1.0) <= 1e-9);
  }
}

TEST_CASE("angle_deg examples, clamping and monotonicity") {
  CHECK(angle_deg(1.0) == 0.0);
  CHECK(angle_deg(0.0) == doctest::Approx(90.0).epsilon(1e-15));
  CHECK(angle_deg(-1.0) == doctest::Approx(180.0).epsilon(1e-15));
  CHECK(angle_deg(1.0 + 1e-12) == 0.0);
  CHECK(angle_deg(-1.0 - 1e-12) == doctest::Approx(180.0).epsilon(1e-15));
  double prev = angle_deg(-1.0);
  for (int i = 1; i <= 200; ++i) {
    const double a = angle_deg(-1.0 + i / 100.0);
    CHECK(a < prev);
    prev = a;
  }
}

TEST_CASE("random_rotation examples") {
  CHECK(random_rotation(1, 0) == Matrix::from_rows({{1}}));
  CHECK(random_rotation(1, 12345) == Matrix::from_rows({{1}}));

  const Matrix r3 = random_rotation(3, 7);
  CHECK(max_abs_diff(matmul_tn(r3, r3), Matrix::identity(3)) < 1e-9);
  CHECK(determinant(r3) == doctest::Approx(1.0).epsilon(1e-12));

  // In 2-D a proper rotation has the form [[c, -s], [s, c]].
  const Matrix r2 = random_rotation(2, 0);
  CHECK(r2(0, 0) == doctest::Approx(r2(1, 1)).epsilon(1e-12));
  CHECK(r2(0, 1) == doctest::Approx(-r2(1, 0)).epsilon(1e-12));
  CHECK(r2(0, 0) * r2(0, 0) + r2(1, 0) * r2(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(determinant(r2) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("random_rotation is orthogonal, proper, seeded and norm preserving") {
  for (std::size_t d : {2u, 4u, 8u, 16u, 32u}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const Matrix r = random_rotation(d, seed);
      CHECK(max_abs_diff(matmul_tn(r, r), Matrix::identity(d)) < 1e-9);
      CHECK(determinant(r) > 0.0);
      CHECK(random_rotation(d, seed) == r);
      Rng rng(seed + 100);
      const auto e = l2_normalize_rows(oracle::random_matrix(4, d, rng));
      const auto rotated = transform_rows(e, r);
      for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(norm(rotated.row(i)) - 1.0) < 1e-9);
    }
  }
  CHECK(random_rotation(4, 0) != random_rotation(4, 1));
}

TEST_CASE("negate_identity examples and modality invariants") {
  CHECK(negate_identity(2) == Matrix::from_rows({{-1, 0}, {0, -1}}));
  CHECK(negate_identity(1) == Matrix::from_rows({{-1}}));

  Rng rng(5);
  const auto v = l2_normalize_rows(oracle::random_matrix(5, 6, rng));
  const auto l = l2_normalize_rows(oracle::random_matrix(5, 6, rng));
  const auto nv = transform_rows(v, negate_identity(6));
  const auto nl = transform_rows(l, negate_identity(6));
  for (std::size_t i = 0; i < 5; ++i) CHECK(norm(nv.row(i)) == doctest::Approx(1.0).epsilon(1e-12));
  const Matrix m = cosine_matrix(v, l);
  CHECK(cosine_matrix(nv, nl) == m);
  CHECK(cosine_matrix(v, nl) == scaled(m, -1.0));
}

TEST_CASE("planar_rotation rotates in-plane vectors by the angle") {
  const Matrix r = planar_rotation(4, 30.0);
  CHECK(max_abs_diff(matmul_tn(r, r), Matrix::identity(4)) < 1e-12);
  const auto e = UnitEmbeddings::from_unit_rows(Matrix::from_rows({{1, 0, 0, 0}}));
  const auto out = transform_rows(e, r);
  CHECK(angle_deg(dot(e.row(0), out.row(0))) == doctest::Approx(30.0).epsilon(1e-12));
  CHECK_THROWS_AS(planar_rotation(3, 10.0, 1, 1), DimensionMismatch);
  CHECK_THROWS_AS(planar_rotation(3, 10.0, 0, 3), DimensionMismatch);
}

TEST_CASE("matrix products agree with the naive oracle") {
  Rng rng(9);
  const Matrix a = oracle::random_matrix(3, 4, rng);
  const Matrix b = oracle::random_matrix(5, 4, rng);
  CHECK(max_abs_diff(matmul_nt(a, b), oracle::similarities(a, b)) < 1e-14);
  CHECK(max_abs_diff(matmul(a, b.transpose()), oracle::similarities(a, b)) < 1e-14);
  CHECK(max_abs_diff(matmul_tn(a.transpose(), b.transpose()), oracle::similarities(a, b)) < 1e-14);
  CHECK_THROWS_AS(matmul(a, b), DimensionMismatch);
}

TEST_CASE("determinant of small matrices") {
  CHECK(determinant(Matrix::from_rows({{2, 0}, {0, 3}})) == doctest::Approx(6.0));
  CHECK(determinant(Matrix::from_rows({{0, 1}, {1, 0}})) == doctest::Approx(-1.0));
  CHECK(determinant(Matrix::from_rows({{1, 2}, {2, 4}})) == doctest::Approx(0.0));
}

TEST_CASE("Rng streams are fixed by the seed") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const double x = a.uniform();
    CHECK(x == b.uniform());
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }
  CHECK(a.gaussian() != c.gaussian());
  Rng d(1);
  for (int i = 0; i < 1000; ++i) CHECK(d.below(7) < 7);
  std::vector<int> items{0, 1, 2, 3, 4, 5, 6, 7};
  Rng e(2);
  e.shuffle(items);
  std::vector<int> sorted = items;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
}
