#pragma once

#include <random>
#include <stdexcept>

#include "itrack/assign/margin_loss.hpp"
#include "itrack/iit/alignment.hpp"
#include "itrack/net/tracker_net.hpp"
#include "itrack/sim/world.hpp"

namespace itrack::iit {

using Sequence = std::vector<sim::FrameRecord>;
using Dataset = std::vector<Sequence>;

struct TrainConfig {
  net::NetConfig net;
  sim::WorldConfig world;  // geometry and thresholds, must match the data
  int epochs = 30;
  double lr = 3e-3;
  double momentum = 0.9;
  double margin = 0.2;
  double lambda_task = 1.0;
  double lambda_iit = 1.0;
  double lambda_probe = 0.1;
  double lambda_forecast = 0.1;
  int iit_pairs_per_frame = 4;
  uint64_t seed = 1;
  double divergence_limit = 1e6;
  std::string trace_path;  // optional per-epoch loss log
};

struct NumericDivergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One within-frame interchange: swap the intervened node (and its aligned
/// activation slice) from the source subject into the base subject.
/// Pair kinds share `detection` and differ in track; detection kinds use
/// detection indices and detection = -1 is meaningless there.
struct InterchangePair {
  scm::DecisionKind kind = scm::DecisionKind::OccludedTrack;
  int base_index = 0;
  int source_index = 0;
  int detection = -1;
};

/// Causal-model answer: output of the kind's graph on the base subject
/// with the intervened node computed under the source subject.
bool counterfactual_label(const sim::FrameRecord& frame,
                          const sim::WorldConfig& world,
                          const InterchangePair& pair);

/// Patched network score of the base subject, 1x1. `clean` must be a
/// forward of the same frame on the same tape; the source slice is read
/// from it so gradient reaches both subjects.
net::Var interchange_score(net::Tape& tape, const net::TrackerNet& netw,
                           const net::ParamVars& params,
                           const net::FrameView& frame,
                           const net::ScoreSet& clean,
                           const InterchangePair& pair);

/// Uniform sampling over the interchange pairs feasible in this frame.
std::vector<InterchangePair> sample_pairs(int num_tracks, int num_detections,
                                          int count, std::mt19937_64& rng);

/// What the network sees: oracle tracks plus carried LSTM state keyed by
/// track identity.
net::FrameView make_frame_view(
    const sim::FrameRecord& frame, const sim::WorldConfig& world,
    const net::NetConfig& cfg,
    const std::map<int, std::pair<Vec, Vec>>& lstm_state);

/// Frame labels re-keyed from track identity to track index.
std::vector<assign::SubjectLabel> index_labels(const sim::FrameRecord& frame);

/// Ground-truth boolean intermediates per subject, probe targets.
scm::ProbedBooleans probe_targets_track(const sim::FrameRecord& frame,
                                        int track_index,
                                        const sim::WorldConfig& world);
scm::ProbedBooleans probe_targets_detection(const sim::FrameRecord& frame,
                                            int det_index,
                                            const sim::WorldConfig& world);
/// matches_this_detection for the (track, detection) pair, per channel.
std::pair<bool, bool> probe_targets_pair(const sim::FrameRecord& frame,
                                         int track_index, int det_index,
                                         const sim::WorldConfig& world);

/// Hinge readout loss of every probe over the frame; activations are
/// gradient-stopped so probes never shape the trunk.
net::Var probe_loss(net::Tape& tape, const net::TrackerNet& netw,
                    const net::ParamVars& params, const net::ScoreSet& scores,
                    const sim::FrameRecord& frame,
                    const sim::WorldConfig& world);

/// Creates probe parameters for every kind (zero-initialized).
void init_probe_params(net::ParamStore& store, const net::NetConfig& cfg);

struct EpochStats {
  double task = 0, iit = 0, probe = 0, forecast = 0, total = 0;
  int frames = 0;
};

/// Teacher-forced training over whole sequences. Throws NumericDivergence
/// when the loss stops being finite or exceeds divergence_limit. Pass a
/// checkpoint and its epoch count to resume; the trace file is then
/// appended to and epoch indices continue from start_epoch.
net::ParamStore train(const Dataset& data, const TrainConfig& cfg,
                      std::vector<EpochStats>* trace = nullptr,
                      const net::ParamStore* init = nullptr,
                      int start_epoch = 0);

}  // namespace itrack::iit
