#include "itrack/assign/margin_loss.hpp"

#include <stdexcept>

namespace itrack::assign {

using net::Tape;
using net::Var;
using scm::DecisionKind;

Var label_score(Tape& tape, const net::ScoreSet& s, const SubjectLabel& l) {
  const int K = s.K;
  switch (l.kind) {
    case DecisionKind::AppearanceMatch:
    case DecisionKind::BboxMatch: {
      const int d = l.track_subject ? l.partner : l.index;
      const int k = l.track_subject ? l.index : l.partner;
      if (d < 0 || k < 0) throw std::invalid_argument("pair label needs partner");
      Var m = l.kind == DecisionKind::AppearanceMatch ? s.s_app : s.s_bbox;
      return tape.row(m, d * K + k);
    }
    case DecisionKind::NewbornTrack:
      return tape.row(s.s_newborn, l.index);
    case DecisionKind::FalsePositiveDetection:
      return tape.row(s.s_fpdet, l.index);
    case DecisionKind::OutOfRangeTrack:
      return tape.row(s.s_oor, l.index);
    case DecisionKind::FalsePositiveTrack:
      return tape.row(s.s_fpt, l.index);
    case DecisionKind::OccludedTrack:
      return tape.row(s.s_occ, l.index);
  }
  throw std::logic_error("bad decision kind");
}

std::vector<Candidate> subject_candidates(Tape& tape, const net::ScoreSet& s,
                                          bool track_subject, int index) {
  std::vector<Candidate> out;
  const int K = s.K, D = s.D;
  if (track_subject) {
    for (int d = 0; d < D; ++d) {
      out.push_back({tape.row(s.s_app, d * K + index),
                     DecisionKind::AppearanceMatch, d});
      out.push_back(
          {tape.row(s.s_bbox, d * K + index), DecisionKind::BboxMatch, d});
    }
    out.push_back({tape.row(s.s_oor, index), DecisionKind::OutOfRangeTrack, -1});
    out.push_back(
        {tape.row(s.s_fpt, index), DecisionKind::FalsePositiveTrack, -1});
    out.push_back({tape.row(s.s_occ, index), DecisionKind::OccludedTrack, -1});
  } else {
    for (int k = 0; k < K; ++k) {
      out.push_back({tape.row(s.s_app, index * K + k),
                     DecisionKind::AppearanceMatch, k});
      out.push_back(
          {tape.row(s.s_bbox, index * K + k), DecisionKind::BboxMatch, k});
    }
    out.push_back({tape.row(s.s_newborn, index), DecisionKind::NewbornTrack, -1});
    out.push_back({tape.row(s.s_fpdet, index),
                   DecisionKind::FalsePositiveDetection, -1});
  }
  return out;
}

Var margin_loss(Tape& tape, const net::ScoreSet& s,
                const std::vector<SubjectLabel>& labels, double margin) {
  Var total = tape.constant(Mat::Zero(1, 1));
  if (labels.empty()) return total;
  for (const SubjectLabel& l : labels) {
    Var correct = label_score(tape, s, l);
    const bool is_pair = l.kind == DecisionKind::AppearanceMatch ||
                         l.kind == DecisionKind::BboxMatch;
    for (const Candidate& c : subject_candidates(tape, s, l.track_subject,
                                                 l.index)) {
      if (c.kind == l.kind && c.partner == l.partner) continue;
      // The other channel of the labeled pair may also be admissible.
      if (is_pair && l.bbox_admissible && c.partner == l.partner &&
          (c.kind == DecisionKind::AppearanceMatch ||
           c.kind == DecisionKind::BboxMatch))
        continue;
      // hinge: max(0, margin - (correct - wrong))
      total = tape.add(
          total, tape.relu(tape.affine(tape.sub(correct, c.score), -1.0,
                                       margin)));
    }
  }
  return tape.scale(total, 1.0 / static_cast<double>(labels.size()));
}

}  // namespace itrack::assign
