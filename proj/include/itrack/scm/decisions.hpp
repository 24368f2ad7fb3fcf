#pragma once

#include <array>
#include <optional>
#include <string>

#include "itrack/scm/graph.hpp"

namespace itrack::scm {

enum class DecisionKind {
  AppearanceMatch,
  BboxMatch,
  NewbornTrack,
  FalsePositiveDetection,
  OutOfRangeTrack,
  FalsePositiveTrack,
  OccludedTrack,
};

constexpr std::array<DecisionKind, 7> kAllDecisionKinds = {
    DecisionKind::AppearanceMatch,     DecisionKind::BboxMatch,
    DecisionKind::NewbornTrack,        DecisionKind::FalsePositiveDetection,
    DecisionKind::OutOfRangeTrack,     DecisionKind::FalsePositiveTrack,
    DecisionKind::OccludedTrack};

const char* kind_name(DecisionKind k);
std::optional<DecisionKind> kind_from_name(const std::string& name);

/// Whether "matches any detection" combines both match nodes or uses the
/// appearance node alone.
enum class MatchesAnyMode { Or, AppearanceOnly };

/// One world-frame forecast step: displacement plus heading change.
struct ForecastStep {
  double dx = 0.0;
  double dy = 0.0;
  double dtheta = 0.0;
  bool operator==(const ForecastStep&) const = default;
};
using Forecast = std::vector<ForecastStep>;

/// Everything a decision SCM may consume for one subject (a track, a
/// detection, or a track/detection pair). Oracle fields are filled at
/// training/labeling time; at probe-driven runtime they stay absent.
struct ScmInputs {
  Forecast forecast;                // track motion forecast, world frame
  OrientedBox box_prev;             // track box at T-1, world frame
  Vec track_appearance;             // unit feature vector
  FeatureList detection_appearances;
  BoxList detection_boxes;          // ego frame at T
  EgoState ego;
  OcclusionGrid grid;               // ego frame at T
  double r_max = 50.0;
  double tau_iou = 0.3;
  double tau_app = 0.5;

  // Oracle side (optional).
  bool oracle_available = false;
  int oracle_match_index = -1;      // associated true-positive detection
  bool appearance_valid = false;    // subject detection, oracle-backed
  bool bbox_valid = false;
  bool matches_any_track = false;   // subject detection vs live tracks

  // Pair decisions: the detection under consideration.
  int candidate_detection_index = -1;
};

// ---- structural-equation primitives -------------------------------------

/// Advances the track box by the first forecast step in the world frame,
/// then expresses it in the ego frame at T.
OrientedBox predicted_bbox_at_t(const Forecast& forecast,
                                const OrientedBox& box_prev,
                                const EgoState& ego_t);

/// Box-center containment test; centers outside the grid extent are visible.
bool is_occluded(const OrientedBox& box, const OcclusionGrid& grid);

/// Strict inequality at r_max.
bool is_out_of_range(const OrientedBox& box_ego, double r_max);

/// BEV intersection-over-union of two rotated rectangles.
double iou_bev(const OrientedBox& a, const OrientedBox& b);

/// Index of the highest-IoU detection if that IoU reaches tau_iou.
/// Ties broken by lowest index.
std::optional<int> matches_bbox(const OrientedBox& pred, const BoxList& dets,
                                double tau_iou);

/// With an oracle: its associated true-positive detection index (if any).
/// Without: highest cosine similarity at or above tau_app.
std::optional<int> matches_appearance(const Vec& track_app,
                                      const FeatureList& det_apps,
                                      bool oracle_available,
                                      int oracle_match_index, double tau_app);

/// Oracle validity of a detection: (real-object identity, box IoU with its
/// ground-truth object at or above tau_iou). Clutter yields (false, false).
std::pair<bool, bool> detection_validity(int det_index, bool oracle_available,
                                         const std::vector<std::pair<bool, bool>>& flags);

// ---- the seven graphs ----------------------------------------------------

/// Causal graph for one decision kind, wired from the primitives above.
CausalGraph build_scm(DecisionKind kind, MatchesAnyMode mode = MatchesAnyMode::Or);

/// Input assignment for build_scm(kind) drawn from one ScmInputs record.
Assignment to_assignment(DecisionKind kind, const ScmInputs& in);

/// forward(build_scm(kind), to_assignment(kind, in), {}).output
bool decide(DecisionKind kind, const ScmInputs& in,
            MatchesAnyMode mode = MatchesAnyMode::Or);

/// Boolean intermediates a probe can estimate at runtime.
struct ProbedBooleans {
  bool is_occluded = false;
  bool is_out_of_range = false;
  bool matches_appearance = false;
  bool matches_bbox = false;
  bool is_valid_detection = false;
  bool matches_any_track = false;
  bool matches_this_detection = false;
};

/// The kind's final structural equation over boolean intermediates only.
bool redecide(DecisionKind kind, const ProbedBooleans& b,
              MatchesAnyMode mode = MatchesAnyMode::Or);

/// Names of the boolean intermediate nodes feeding the kind's decision.
std::vector<std::string> boolean_intermediates(DecisionKind kind);

}  // namespace itrack::scm
