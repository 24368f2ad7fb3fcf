#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "itrack/scm/decisions.hpp"

namespace itrack::sim {

struct ObjectState {
  int identity = 0;
  Pose2d pose;
  double vx = 0.0, vy = 0.0;
  double h = 1.6, l = 4.5, w = 2.0;
  Vec embedding;  // unit norm, length A

  OrientedBox box() const {
    return {pose.x, pose.y, 0.9, h, l, w, vx, vy, pose.heading};
  }
};

struct SensorModel {
  double sigma_pos = 0.25;
  double sigma_dim = 0.05;
  double sigma_theta = 0.02;
  double sigma_app = 0.10;
  double p_miss = 0.02;
  double lambda_fp = 0.3;    // clutter detections per frame
  double r_max = 50.0;
  double grid_extent = 55.0; // half-size of the square grid, meters
  double grid_cell = 1.0;
};

struct Detection {
  OrientedBox box;  // ego frame at T
  double score = 1.0;
  Vec appearance;
};

/// A live oracle track entering frame T. box_prev is world frame at T-1.
struct OracleTrack {
  int identity = 0;      // negative for phantom tracks seeded by clutter
  OrientedBox box_prev;
  Vec appearance;
  bool phantom = false;
};

struct DecisionLabel {
  bool track_subject = false;  // else detection subject
  int subject = 0;             // track identity or detection index
  scm::DecisionKind kind = scm::DecisionKind::FalsePositiveDetection;
  int partner = -1;            // pair decisions: the matched counterpart
  bool bbox_admissible = false;

  bool operator==(const DecisionLabel&) const = default;
};

struct FrameRecord {
  int t = 0;
  EgoState ego;
  std::vector<ObjectState> objects;     // ground truth at T
  std::vector<Detection> detections;    // ego frame at T
  OcclusionGrid grid;                   // ego frame at T
  std::vector<int> association;         // per detection: identity, -1 clutter
  std::vector<OracleTrack> tracks;      // oracle live tracks entering T
  std::vector<DecisionLabel> labels;
};

struct WorldConfig {
  int num_sequences = 10;
  int frames = 20;
  int min_objects = 2;
  int max_objects = 6;
  int appearance_dim = 8;
  double dt = 0.5;
  double ego_speed = 5.0;
  double lane_width = 4.0;
  int num_lanes = 6;
  double speed_min = 2.0;
  double speed_max = 12.0;
  double heading_jitter = 0.0;
  double phantom_spawn_prob = 0.5;
  double tau_iou = 0.3;
  double tau_app = 0.5;
  scm::MatchesAnyMode matches_any = scm::MatchesAnyMode::Or;
  SensorModel sensor;
  uint64_t seed = 1;
};

/// Constant-velocity update with optional heading jitter; the ego follows
/// a constant-velocity path.
void step_world(std::vector<ObjectState>& objects, EgoState& ego, double dt,
                std::mt19937_64& rng, double heading_jitter = 0.0);

/// Ego-frame occlusion raster: a cell is occluded iff the segment from the
/// ego position to the cell center crosses an object's BEV rectangle,
/// excluding cells whose center lies inside that same object.
OcclusionGrid raycast_occlusion(const EgoState& ego,
                                const std::vector<ObjectState>& objects,
                                double extent, double cell_size);

/// Emulated detector: range/occlusion/miss dropouts, Gaussian-perturbed
/// boxes, noisy re-normalized appearances, Poisson clutter. Fills
/// detections and the per-detection oracle association.
void emulate_detector(const std::vector<ObjectState>& objects,
                      const EgoState& ego, const OcclusionGrid& grid,
                      const SensorModel& sensor, double tau_iou,
                      std::mt19937_64& rng, std::vector<Detection>& detections,
                      std::vector<int>& association);

/// Oracle ScmInputs for one live track of a frame.
scm::ScmInputs track_inputs(const FrameRecord& frame, const OracleTrack& track,
                            const WorldConfig& cfg);

/// Oracle ScmInputs for one detection of a frame.
scm::ScmInputs detection_inputs(const FrameRecord& frame, int det_index,
                                const WorldConfig& cfg);

/// Seven-way labels for every live track and every detection of a frame.
std::vector<DecisionLabel> label_decisions(const FrameRecord& frame,
                                           const WorldConfig& cfg);

/// One fully simulated and labeled sequence, deterministic in
/// (cfg.seed, sequence_index).
std::vector<FrameRecord> simulate_sequence(const WorldConfig& cfg,
                                           int sequence_index);

/// Writes num_sequences files plus a manifest under out_dir.
void generate_dataset(const WorldConfig& cfg, const std::string& out_dir,
                      bool force = false);

}  // namespace itrack::sim
