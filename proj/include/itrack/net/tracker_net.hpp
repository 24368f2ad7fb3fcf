#pragma once

#include <map>
#include <string>
#include <vector>

#include "itrack/net/params.hpp"
#include "itrack/net/tape.hpp"
#include "itrack/scm/decisions.hpp"

namespace itrack::net {

struct NetConfig {
  int appearance_dim = 8;   // A
  int bbox_feat_dim = 16;   // B
  int informed_dim = 16;    // H, multiple of 8
  int rounds = 1;           // message-passing rounds
  int horizon = 3;          // forecast steps
  int lstm_hidden = 16;     // G
};

/// One live track as the network sees it entering frame T.
struct TrackView {
  OrientedBox box_prev;  // world frame at T-1
  Vec appearance;
  Vec hidden;            // LSTM state, length G (zero for a fresh track)
  Vec cell;
};

struct DetectionView {
  OrientedBox box;  // ego frame at T
  double score = 1.0;
  Vec appearance;
};

struct FrameView {
  std::vector<TrackView> tracks;
  std::vector<DetectionView> detections;
  EgoState ego;
  OcclusionGrid grid;
  double dt = 0.5;
  double r_max = 50.0;
  double tau_iou = 0.3;
  double tau_app = 0.5;
};

/// Overwrite a 1-wide row block of a named activation before anything
/// downstream consumes it (the interchange mechanism).
struct CachePatch {
  std::string slot;
  int row = 0;
  int col = 0;
  Var patch;  // 1xN
};

/// All decision scores of one frame plus the named activation cache.
/// Pair scores are laid out detection-major: row d*K + k.
struct ScoreSet {
  int D = 0, K = 0;
  Var s_app, s_bbox;        // (D*K) x 1
  Var s_newborn, s_fpdet;   // D x 1
  Var s_oor, s_fpt, s_occ;  // K x 1
  Var det_informed;         // D x 2H, LSTM input rows
  std::map<std::string, Var> cache;
};

using ParamVars = std::map<std::string, Var>;

/// Leaf every stored tensor onto the tape.
ParamVars lift_params(Tape& tape, const ParamStore& store);

/// Fold tape gradients back into the store, in name order.
void accumulate_grads(const Tape& tape, const ParamVars& vars,
                      ParamStore& store);

/// Short cache/param prefix for a decision head ("occ", "newborn", ...).
const char* head_tag(scm::DecisionKind kind);

class TrackerNet {
 public:
  explicit TrackerNet(NetConfig cfg);

  /// Creates every parameter tensor in a fixed order. Weights draw from
  /// U[-1/sqrt(fan_in), 1/sqrt(fan_in)]; biases start at zero.
  void init_params(ParamStore& store, uint64_t seed) const;

  ScoreSet forward(Tape& tape, const ParamVars& params, const FrameView& frame,
                   const std::vector<CachePatch>& patches = {}) const;

  /// One LSTM step; x is 1x2H, h and c are 1xG. Returns (h', c').
  std::pair<Var, Var> lstm_step(Tape& tape, const ParamVars& params, Var x,
                                Var h, Var c) const;

  /// Per-step world-frame offsets (dx, dy, dtheta) x horizon, 1x3h.
  Var forecast_offsets(Tape& tape, const ParamVars& params, Var hidden) const;

  static scm::Forecast offsets_to_forecast(const Mat& offsets);

  /// Every named cache slot and its column width.
  std::vector<std::pair<std::string, int>> cache_registry() const;

  const NetConfig& config() const { return cfg_; }

 private:
  NetConfig cfg_;
};

}  // namespace itrack::net
