#include <algorithm>
#include <numeric>
#include <random>

#include "doctest.h"
#include "itrack/assign/decision_matrix.hpp"
#include "itrack/assign/hungarian.hpp"
#include "itrack/assign/margin_loss.hpp"

using namespace itrack;
using assign::CellKind;
using net::Tape;
using net::Var;
using scm::DecisionKind;

namespace {

double brute_force_best(const Mat& score) {
  const int n = static_cast<int>(score.rows());
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = -1e300;
  do {
    double total = 0.0;
    for (int r = 0; r < n; ++r) total += score(r, perm[r]);
    best = std::max(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

double assignment_total(const Mat& score, const std::vector<int>& cols) {
  double total = 0.0;
  for (int r = 0; r < score.rows(); ++r) total += score(r, cols[r]);
  return total;
}

net::ScoreSet random_scores(Tape& tape, int D, int K, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  auto mat = [&](int rows) {
    Mat m(rows, 1);
    for (int i = 0; i < rows; ++i) m(i, 0) = g(rng);
    return tape.constant(m);
  };
  net::ScoreSet s;
  s.D = D;
  s.K = K;
  s.s_app = mat(D * K);
  s.s_bbox = mat(D * K);
  s.s_newborn = mat(D);
  s.s_fpdet = mat(D);
  s.s_oor = mat(K);
  s.s_fpt = mat(K);
  s.s_occ = mat(K);
  return s;
}

}  // namespace

TEST_CASE("hungarian matches brute force on dense matrices") {
  std::mt19937_64 rng(41);
  std::normal_distribution<double> g(0.0, 2.0);
  std::uniform_int_distribution<int> size(1, 7);
  for (int rep = 0; rep < 300; ++rep) {
    const int n = size(rng);
    Mat m(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) m(r, c) = g(rng);
    const auto cols = assign::solve_assignment(m);
    std::vector<char> seen(n, 0);
    for (int c : cols) {
      REQUIRE(c >= 0);
      REQUIRE(!seen[c]);
      seen[c] = 1;
    }
    CHECK(assignment_total(m, cols) ==
          doctest::Approx(brute_force_best(m)).epsilon(1e-12));
  }
}

TEST_CASE("hungarian matches brute force on augmented decision matrices") {
  std::mt19937_64 rng(43);
  std::uniform_int_distribution<int> size(0, 4);
  int instances = 0;
  while (instances < 600) {
    const int D = size(rng), K = size(rng);
    if (D + K == 0) continue;
    Tape tape;
    auto s = random_scores(tape, D, K, rng);
    auto m = assign::build_matrix(tape, s);
    const auto cols = assign::solve_assignment(m.score);
    CHECK(assignment_total(m.score, cols) ==
          doctest::Approx(brute_force_best(m.score)).epsilon(1e-12));
    // The optimum never pays a forbidden cell: fillers make a zero-score
    // completion always available.
    for (int r = 0; r < D + K; ++r)
      CHECK(m.choice[r][cols[r]].cell != CellKind::Forbidden);
    ++instances;
  }
}

TEST_CASE("matrix layout: maxima, forbidden cells, fillers, tie-breaks") {
  Tape tape;
  std::mt19937_64 rng(7);
  auto s = random_scores(tape, 3, 2, rng);
  auto m = assign::build_matrix(tape, s);
  REQUIRE(m.score.rows() == 5);

  for (int d = 0; d < 3; ++d)
    for (int k = 0; k < 2; ++k) {
      CHECK(m.score(d, k) == std::max(tape.value(s.s_app)(d * 2 + k, 0),
                                      tape.value(s.s_bbox)(d * 2 + k, 0)));
      CHECK(m.choice[d][k].cell == CellKind::Pair);
    }
  for (int d = 0; d < 3; ++d)
    for (int j = 0; j < 3; ++j) {
      if (j == d) {
        CHECK(m.score(d, 2 + j) == std::max(tape.value(s.s_newborn)(d, 0),
                                            tape.value(s.s_fpdet)(d, 0)));
      } else {
        CHECK(m.score(d, 2 + j) == assign::kForbidden);
        CHECK(m.choice[d][2 + j].cell == CellKind::Forbidden);
      }
    }
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 2; ++k) {
      if (i == k) {
        CHECK(m.score(3 + i, k) ==
              std::max({tape.value(s.s_occ)(k, 0), tape.value(s.s_oor)(k, 0),
                        tape.value(s.s_fpt)(k, 0)}));
      } else {
        CHECK(m.score(3 + i, k) == assign::kForbidden);
      }
    }
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) {
      CHECK(m.score(3 + i, 2 + j) == 0.0);
      CHECK(m.choice[3 + i][2 + j].cell == CellKind::Filler);
    }
}

TEST_CASE("ties prefer appearance, newborn, and occluded") {
  Tape tape;
  net::ScoreSet s;
  s.D = 1;
  s.K = 1;
  s.s_app = tape.constant(Mat::Constant(1, 1, 0.4));
  s.s_bbox = tape.constant(Mat::Constant(1, 1, 0.4));
  s.s_newborn = tape.constant(Mat::Constant(1, 1, -0.1));
  s.s_fpdet = tape.constant(Mat::Constant(1, 1, -0.1));
  s.s_oor = tape.constant(Mat::Constant(1, 1, 0.2));
  s.s_fpt = tape.constant(Mat::Constant(1, 1, 0.2));
  s.s_occ = tape.constant(Mat::Constant(1, 1, 0.2));
  auto m = assign::build_matrix(tape, s);
  CHECK(m.choice[0][0].kind == DecisionKind::AppearanceMatch);
  CHECK(m.choice[0][1].kind == DecisionKind::NewbornTrack);
  CHECK(m.choice[1][0].kind == DecisionKind::OccludedTrack);
}

TEST_CASE("decoding covers every detection and track exactly once") {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> size(0, 4);
  for (int rep = 0; rep < 100; ++rep) {
    const int D = size(rng), K = size(rng);
    if (D + K == 0) continue;
    Tape tape;
    auto s = random_scores(tape, D, K, rng);
    auto m = assign::build_matrix(tape, s);
    auto decisions =
        assign::decode_assignment(m, assign::solve_assignment(m.score));
    std::vector<int> det_seen(D, 0), trk_seen(K, 0);
    for (const auto& d : decisions) {
      if (d.track_subject)
        ++trk_seen[d.index];
      else
        ++det_seen[d.index];
    }
    for (int c : det_seen) CHECK(c == 1);
    for (int c : trk_seen) CHECK(c == 1);
  }
}

TEST_CASE("margin loss hand-computed values") {
  Tape tape;
  net::ScoreSet s;
  s.D = 1;
  s.K = 1;
  s.s_app = tape.constant(Mat::Constant(1, 1, 1.0));
  s.s_bbox = tape.constant(Mat::Constant(1, 1, 0.1));
  s.s_newborn = tape.constant(Mat::Constant(1, 1, 0.95));
  s.s_fpdet = tape.constant(Mat::Constant(1, 1, -1.0));
  s.s_oor = tape.constant(Mat::Constant(1, 1, 0.0));
  s.s_fpt = tape.constant(Mat::Constant(1, 1, 0.0));
  s.s_occ = tape.constant(Mat::Constant(1, 1, 0.0));

  // Detection 0 labeled AppearanceMatch with track 0, bbox not admissible.
  assign::SubjectLabel l{false, 0, DecisionKind::AppearanceMatch, 0, false};
  // wrong set: bbox (1.0-0.1=0.9 >= m), newborn (0.05 < m), fpdet (2.0).
  Var loss = assign::margin_loss(tape, s, {l}, 0.2);
  CHECK(tape.scalar(loss) == doctest::Approx(0.15).epsilon(1e-12));

  // bbox admissible removes only the other channel's hinge.
  Tape tape2;
  net::ScoreSet s2 = s;  // vars are tape-bound; rebuild on tape2
  s2.s_app = tape2.constant(Mat::Constant(1, 1, 1.0));
  s2.s_bbox = tape2.constant(Mat::Constant(1, 1, 0.9));
  s2.s_newborn = tape2.constant(Mat::Constant(1, 1, 0.95));
  s2.s_fpdet = tape2.constant(Mat::Constant(1, 1, -1.0));
  assign::SubjectLabel l2{false, 0, DecisionKind::AppearanceMatch, 0, true};
  Var loss2 = assign::margin_loss(tape2, s2, {l2}, 0.2);
  CHECK(tape2.scalar(loss2) == doctest::Approx(0.15).epsilon(1e-12));
}

TEST_CASE("margin loss is zero once the gap clears the margin everywhere") {
  Tape tape;
  std::mt19937_64 rng(3);
  auto s = random_scores(tape, 2, 2, rng);
  // Push the labeled cells far above everything else.
  Mat app = tape.value(s.s_app);
  app(0 * 2 + 0, 0) = 50.0;
  s.s_app = tape.constant(app);
  Mat occ = tape.value(s.s_occ);
  occ(1, 0) = 50.0;
  s.s_occ = tape.constant(occ);
  std::vector<assign::SubjectLabel> labels = {
      {false, 0, DecisionKind::AppearanceMatch, 0, false},
      {true, 0, DecisionKind::AppearanceMatch, 0, false},
      {true, 1, DecisionKind::OccludedTrack, -1, false}};
  CHECK(tape.scalar(assign::margin_loss(tape, s, labels, 0.2)) == 0.0);
}

TEST_CASE("margin loss gradient matches finite differences") {
  std::mt19937_64 rng(29);
  std::normal_distribution<double> g;
  Mat app(4, 1), bbox(4, 1), newborn(2, 1), fpdet(2, 1), oor(2, 1), fpt(2, 1),
      occ(2, 1);
  for (Mat* m : {&app, &bbox, &newborn, &fpdet, &oor, &fpt, &occ})
    for (int i = 0; i < m->rows(); ++i) (*m)(i, 0) = 0.3 * g(rng);
  std::vector<assign::SubjectLabel> labels = {
      {false, 0, DecisionKind::AppearanceMatch, 1, true},
      {false, 1, DecisionKind::FalsePositiveDetection, -1, false},
      {true, 0, DecisionKind::OccludedTrack, -1, false},
      {true, 1, DecisionKind::AppearanceMatch, 0, true}};

  auto eval = [&](Tape& tape, net::Var* grad_target) {
    net::ScoreSet s;
    s.D = 2;
    s.K = 2;
    s.s_app = tape.leaf(app);
    s.s_bbox = tape.leaf(bbox);
    s.s_newborn = tape.leaf(newborn);
    s.s_fpdet = tape.leaf(fpdet);
    s.s_oor = tape.leaf(oor);
    s.s_fpt = tape.leaf(fpt);
    s.s_occ = tape.leaf(occ);
    if (grad_target) *grad_target = s.s_app;
    return assign::margin_loss(tape, s, labels, 0.2);
  };

  Tape tape;
  net::Var target;
  net::Var loss = eval(tape, &target);
  tape.backward(loss);
  const Mat grad = tape.grad(target);
  const double eps = 1e-5;
  for (int i = 0; i < 4; ++i) {
    app(i, 0) += eps;
    Tape th;
    const double hi = th.scalar(eval(th, nullptr));
    app(i, 0) -= 2 * eps;
    Tape tl;
    const double lo = tl.scalar(eval(tl, nullptr));
    app(i, 0) += eps;
    CHECK(std::abs(grad(i, 0) - (hi - lo) / (2 * eps)) < 1e-3);
  }
}
