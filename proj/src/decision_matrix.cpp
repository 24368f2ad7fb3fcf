#include "itrack/assign/decision_matrix.hpp"

namespace itrack::assign {

using scm::DecisionKind;

DecisionMatrix build_matrix(const net::Tape& tape, const net::ScoreSet& s) {
  const int D = s.D, K = s.K, n = D + K;
  DecisionMatrix m;
  m.D = D;
  m.K = K;
  m.score = Mat::Constant(n, n, kForbidden);
  m.choice.assign(n, std::vector<CellChoice>(n));

  for (int d = 0; d < D; ++d)
    for (int k = 0; k < K; ++k) {
      const double app = tape.value(s.s_app)(d * K + k, 0);
      const double bbox = tape.value(s.s_bbox)(d * K + k, 0);
      m.score(d, k) = std::max(app, bbox);
      m.choice[d][k] = {CellKind::Pair, app >= bbox
                                            ? DecisionKind::AppearanceMatch
                                            : DecisionKind::BboxMatch};
    }
  for (int d = 0; d < D; ++d) {
    const double newborn = tape.value(s.s_newborn)(d, 0);
    const double fpdet = tape.value(s.s_fpdet)(d, 0);
    m.score(d, K + d) = std::max(newborn, fpdet);
    m.choice[d][K + d] = {CellKind::DetDummy,
                          newborn >= fpdet ? DecisionKind::NewbornTrack
                                           : DecisionKind::FalsePositiveDetection};
  }
  for (int k = 0; k < K; ++k) {
    const double occ = tape.value(s.s_occ)(k, 0);
    const double oor = tape.value(s.s_oor)(k, 0);
    const double fpt = tape.value(s.s_fpt)(k, 0);
    DecisionKind kind = DecisionKind::OccludedTrack;
    double best = occ;
    if (oor > best) {
      best = oor;
      kind = DecisionKind::OutOfRangeTrack;
    }
    if (fpt > best) {
      best = fpt;
      kind = DecisionKind::FalsePositiveTrack;
    }
    m.score(D + k, k) = best;
    m.choice[D + k][k] = {CellKind::TrackDummy, kind};
  }
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < D; ++j) {
      m.score(D + i, K + j) = 0.0;
      m.choice[D + i][K + j].cell = CellKind::Filler;
    }
  return m;
}

std::vector<AssignedDecision> decode_assignment(
    const DecisionMatrix& m, const std::vector<int>& col_of_row) {
  std::vector<AssignedDecision> out;
  for (int r = 0; r < m.D + m.K; ++r) {
    const int c = col_of_row[r];
    const CellChoice& ch = m.choice[r][c];
    switch (ch.cell) {
      case CellKind::Pair:
        out.push_back({false, r, ch.kind, c});
        out.push_back({true, c, ch.kind, r});
        break;
      case CellKind::DetDummy:
        out.push_back({false, r, ch.kind, -1});
        break;
      case CellKind::TrackDummy:
        out.push_back({true, c, ch.kind, -1});
        break;
      case CellKind::Filler:
      case CellKind::Forbidden:
        break;
    }
  }
  return out;
}

}  // namespace itrack::assign
