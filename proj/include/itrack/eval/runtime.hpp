#pragma once

#include "itrack/assign/decision_matrix.hpp"
#include "itrack/iit/train.hpp"

namespace itrack::eval {

// ---- teacher-forced decision quality --------------------------------------

struct KindCounts {
  int tp = 0, fp = 0, fn = 0;
  double precision() const { return tp + fp == 0 ? 0.0 : double(tp) / (tp + fp); }
  double recall() const { return tp + fn == 0 ? 0.0 : double(tp) / (tp + fn); }
};

struct DecisionMetrics {
  int subjects = 0;
  int correct = 0;
  std::map<scm::DecisionKind, KindCounts> per_kind;
  double accuracy() const {
    return subjects == 0 ? 0.0 : double(correct) / subjects;
  }
};

/// Runs the matching pipeline on every frame with oracle-driven track sets
/// and compares the decoded decision of each subject to its label.
DecisionMetrics decision_accuracy(const iit::Dataset& data,
                                  const iit::TrainConfig& cfg,
                                  const net::ParamStore& store);

// ---- interchange intervention accuracy -------------------------------------

struct IiaReport {
  int pairs = 0, correct = 0;
  std::map<scm::DecisionKind, std::pair<int, int>> per_kind;  // correct, total
  double overall() const { return pairs == 0 ? 0.0 : double(correct) / pairs; }
};

/// Fraction of sampled interchange pairs where the sign of the patched
/// network score equals the causal model's counterfactual answer.
IiaReport compute_iia(const iit::Dataset& data, const iit::TrainConfig& cfg,
                      const net::ParamStore& store, int pairs_per_frame,
                      uint64_t seed);

// ---- uncertainty flags ------------------------------------------------------

struct UncertaintyStats {
  int flagged = 0, flagged_errors = 0;
  int unflagged = 0, unflagged_errors = 0;
  double flag_rate() const {
    const int n = flagged + unflagged;
    return n == 0 ? 0.0 : double(flagged) / n;
  }
  double flagged_error_rate() const {
    return flagged == 0 ? 0.0 : double(flagged_errors) / flagged;
  }
  double unflagged_error_rate() const {
    return unflagged == 0 ? 0.0 : double(unflagged_errors) / unflagged;
  }
};

/// A subject is flagged when its probe readouts contradict the decision
/// the network made for it; errors are judged against the oracle labels.
UncertaintyStats uncertainty_eval(const iit::Dataset& data,
                                  const iit::TrainConfig& cfg,
                                  const net::ParamStore& store);

/// P(X >= k) for X ~ Binomial(n, p), evaluated in log space.
double binomial_upper_pvalue(int n, int k, double p);

// ---- explanations -----------------------------------------------------------

struct Explanation {
  scm::DecisionKind kind = scm::DecisionKind::OccludedTrack;
  double score = 0.0;                 // raw network score of the subject
  bool probes_available = true;       // false: untrained probes, null fields
  std::map<std::string, bool> nodes;  // probed intermediate -> readout
  bool decision = false;              // the kind's equation over the readouts
  bool agrees = true;                 // sign(score) == decision
};

/// Probe-based explanation of one subject, no ground truth involved.
/// Pair kinds take the track index plus the candidate detection.
Explanation explain_subject(const net::Tape& tape, const net::TrackerNet& netw,
                            const net::ParamStore& store,
                            const net::ScoreSet& scores,
                            scm::DecisionKind kind, int index, int detection,
                            scm::MatchesAnyMode mode);

/// The disagreement flag: probes readable and contradicting the network.
inline bool uncertainty_flag(const Explanation& e) {
  return e.probes_available && !e.agrees;
}

std::string format_explanation(const Explanation& e);

/// One decided subject of one frame, with its explanation and whether the
/// decision matched the oracle label.
struct SubjectRecord {
  int sequence = 0;
  int frame = 0;
  bool track_subject = false;
  int subject = 0;  // track identity or detection index
  assign::AssignedDecision decision;
  Explanation explanation;
  bool correct = false;
};

std::vector<SubjectRecord> per_subject_records(const iit::Dataset& data,
                                               const iit::TrainConfig& cfg,
                                               const net::ParamStore& store);

// ---- free-running tracker ---------------------------------------------------

struct TrackOutput {
  int id = 0;
  OrientedBox box;  // world frame
  bool occluded = false;
};

struct FrameOutput {
  int t = 0;
  std::vector<TrackOutput> tracks;                  // after the update
  std::vector<assign::AssignedDecision> decisions;  // entering-index based
  std::vector<int> entering_ids;                    // id per entering track
  std::vector<Explanation> explanations;            // one per decision
};

struct TrackerRun {
  std::vector<FrameOutput> frames;
  int id_switches = 0;
  double ade = 0.0;  // forecast displacement error, matched tracks
  double fde = 0.0;
};

struct TrackerOptions {
  int occluded_persistence = 5;  // coasting frames before retirement
  bool with_explanations = false;
};

TrackerRun run_tracker(const iit::Sequence& seq, const iit::TrainConfig& cfg,
                       const net::ParamStore& store,
                       const TrackerOptions& opt = {});

}  // namespace itrack::eval
