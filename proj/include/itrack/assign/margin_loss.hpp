#pragma once

#include <vector>

#include "itrack/net/tracker_net.hpp"

namespace itrack::assign {

/// Ground-truth decision for one subject of a frame, index-based.
struct SubjectLabel {
  bool track_subject = false;
  int index = 0;  // track index k or detection index d
  scm::DecisionKind kind = scm::DecisionKind::FalsePositiveDetection;
  int partner = -1;
  bool bbox_admissible = false;  // pair labels: the other channel is also right
};

/// Mean over subjects of sum_wrong max(0, margin - (s_correct - s_wrong)).
/// For pair labels the other channel's score at the same cell is excluded
/// from the wrong set when bbox_admissible is set.
net::Var margin_loss(net::Tape& tape, const net::ScoreSet& s,
                     const std::vector<SubjectLabel>& labels, double margin);

/// The label's own score cell.
net::Var label_score(net::Tape& tape, const net::ScoreSet& s,
                     const SubjectLabel& label);

/// All candidate score cells of a subject, with the decision each encodes.
struct Candidate {
  net::Var score;
  scm::DecisionKind kind;
  int partner = -1;
};
std::vector<Candidate> subject_candidates(net::Tape& tape,
                                          const net::ScoreSet& s,
                                          bool track_subject, int index);

}  // namespace itrack::assign
