#pragma once

#include <vector>

#include "itrack/net/tracker_net.hpp"

namespace itrack::assign {

constexpr double kForbidden = -1e6;

enum class CellKind { Pair, DetDummy, TrackDummy, Filler, Forbidden };

struct CellChoice {
  CellKind cell = CellKind::Forbidden;
  scm::DecisionKind kind = scm::DecisionKind::FalsePositiveDetection;
};

/// (D+K)x(D+K) augmented score matrix. Rows are the D detections followed
/// by K dummy detections; columns are the K tracks followed by D dummy
/// tracks. Real cells take the max over the decision heads that can claim
/// them; `choice` records which head won.
struct DecisionMatrix {
  int D = 0, K = 0;
  Mat score;
  std::vector<std::vector<CellChoice>> choice;
};

DecisionMatrix build_matrix(const net::Tape& tape, const net::ScoreSet& s);

/// One decision read off a solved assignment.
struct AssignedDecision {
  bool track_subject = false;
  int index = 0;  // track index k or detection index d
  scm::DecisionKind kind = scm::DecisionKind::FalsePositiveDetection;
  int partner = -1;  // pair decisions: the other side's index
};

/// Decisions implied by a row-to-column assignment of the matrix. Pair
/// cells yield one decision for the detection and one for the track.
std::vector<AssignedDecision> decode_assignment(
    const DecisionMatrix& m, const std::vector<int>& col_of_row);

}  // namespace itrack::assign
