#include "itrack/sim/world.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "itrack/io/frame_format.hpp"

namespace itrack::sim {

void step_world(std::vector<ObjectState>& objects, EgoState& ego, double dt,
                std::mt19937_64& rng, double heading_jitter) {
  std::normal_distribution<double> jitter(0.0, heading_jitter);
  for (auto& o : objects) {
    o.pose.x += o.vx * dt;
    o.pose.y += o.vy * dt;
    if (heading_jitter > 0.0) {
      const double dth = jitter(rng);
      o.pose.heading = wrap_angle(o.pose.heading + dth);
      const double speed = std::hypot(o.vx, o.vy);
      o.vx = speed * std::cos(o.pose.heading);
      o.vy = speed * std::sin(o.pose.heading);
    }
  }
  ego.pose.x += ego.vx * dt;
  ego.pose.y += ego.vy * dt;
}

namespace {

struct EgoRect {
  OrientedBox box;  // ego frame
};

bool point_in_rect(const OrientedBox& b, double px, double py) {
  const double c = std::cos(-b.theta), s = std::sin(-b.theta);
  const double lx = c * (px - b.x) - s * (py - b.y);
  const double ly = s * (px - b.x) + c * (py - b.y);
  return std::abs(lx) <= b.l / 2 && std::abs(ly) <= b.w / 2;
}

int orient(double ax, double ay, double bx, double by, double cx, double cy) {
  const double v = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
  if (v > 0) return 1;
  if (v < 0) return -1;
  return 0;
}

bool segments_intersect(double ax, double ay, double bx, double by, double cx,
                        double cy, double dx, double dy) {
  const int o1 = orient(ax, ay, bx, by, cx, cy);
  const int o2 = orient(ax, ay, bx, by, dx, dy);
  const int o3 = orient(cx, cy, dx, dy, ax, ay);
  const int o4 = orient(cx, cy, dx, dy, bx, by);
  return o1 != o2 && o3 != o4;
}

bool segment_hits_rect(const OrientedBox& b, double x1, double y1, double x2,
                       double y2) {
  if (point_in_rect(b, x2, y2) || point_in_rect(b, x1, y1)) return true;
  const double c = std::cos(b.theta), s = std::sin(b.theta);
  const double hl = b.l / 2, hw = b.w / 2;
  const double cx[4] = {hl, hl, -hl, -hl}, cy[4] = {hw, -hw, -hw, hw};
  double px[4], py[4];
  for (int i = 0; i < 4; ++i) {
    px[i] = b.x + c * cx[i] - s * cy[i];
    py[i] = b.y + s * cx[i] + c * cy[i];
  }
  for (int i = 0; i < 4; ++i) {
    const int j = (i + 1) % 4;
    if (segments_intersect(x1, y1, x2, y2, px[i], py[i], px[j], py[j]))
      return true;
  }
  return false;
}

OrientedBox to_ego_box(const OrientedBox& world, const Pose2d& ego) {
  OrientedBox b = world;
  const Eigen::Vector2d p = to_ego_frame(world.x, world.y, ego);
  b.x = p.x();
  b.y = p.y();
  b.theta = wrap_angle(world.theta - ego.heading);
  const double c = std::cos(-ego.heading), s = std::sin(-ego.heading);
  b.vx = c * world.vx - s * world.vy;
  b.vy = s * world.vx + c * world.vy;
  return b;
}

OrientedBox to_world_box(const OrientedBox& ego_box, const Pose2d& ego) {
  OrientedBox b = ego_box;
  const Eigen::Vector2d p = to_world_frame(ego_box.x, ego_box.y, ego);
  b.x = p.x();
  b.y = p.y();
  b.theta = wrap_angle(ego_box.theta + ego.heading);
  const double c = std::cos(ego.heading), s = std::sin(ego.heading);
  b.vx = c * ego_box.vx - s * ego_box.vy;
  b.vy = s * ego_box.vx + c * ego_box.vy;
  return b;
}

scm::Forecast constant_velocity_forecast(const OrientedBox& box_prev,
                                         double dt, int steps = 1) {
  scm::Forecast f;
  for (int i = 0; i < steps; ++i)
    f.push_back({box_prev.vx * dt, box_prev.vy * dt, 0.0});
  return f;
}

}  // namespace

OcclusionGrid raycast_occlusion(const EgoState& ego,
                                const std::vector<ObjectState>& objects,
                                double extent, double cell_size) {
  OcclusionGrid grid;
  grid.origin = {-extent, -extent, 0.0};
  grid.cell_size = cell_size;
  grid.width = static_cast<int>(std::round(2.0 * extent / cell_size));
  grid.height = grid.width;
  grid.mask.assign(static_cast<size_t>(grid.width) * grid.height, 0);

  std::vector<OrientedBox> rects;
  rects.reserve(objects.size());
  for (const auto& o : objects) rects.push_back(to_ego_box(o.box(), ego.pose));

  for (int iy = 0; iy < grid.height; ++iy) {
    for (int ix = 0; ix < grid.width; ++ix) {
      const double cx = grid.origin.x + (ix + 0.5) * cell_size;
      const double cy = grid.origin.y + (iy + 0.5) * cell_size;
      for (const auto& r : rects) {
        if (point_in_rect(r, cx, cy)) continue;  // own footprint casts no shadow on itself
        if (segment_hits_rect(r, 0.0, 0.0, cx, cy)) {
          grid.mask[static_cast<size_t>(iy) * grid.width + ix] = 1;
          break;
        }
      }
    }
  }
  return grid;
}

void emulate_detector(const std::vector<ObjectState>& objects,
                      const EgoState& ego, const OcclusionGrid& grid,
                      const SensorModel& sensor, double tau_iou,
                      std::mt19937_64& rng, std::vector<Detection>& detections,
                      std::vector<int>& association) {
  detections.clear();
  association.clear();
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (const auto& o : objects) {
    const OrientedBox gt = to_ego_box(o.box(), ego.pose);
    if (std::hypot(gt.x, gt.y) > sensor.r_max) continue;
    auto [ix, iy] = grid.cell_of(gt.x, gt.y);
    if (ix >= 0 && grid.at(ix, iy)) continue;
    if (unit(rng) < sensor.p_miss) continue;

    Detection d;
    d.box = gt;
    const double nx = sensor.sigma_pos * gauss(rng);
    const double ny = sensor.sigma_pos * gauss(rng);
    d.box.x += nx;
    d.box.y += ny;
    d.box.h = std::max(0.2, d.box.h + sensor.sigma_dim * gauss(rng));
    d.box.l = std::max(0.2, d.box.l + sensor.sigma_dim * gauss(rng));
    d.box.w = std::max(0.2, d.box.w + sensor.sigma_dim * gauss(rng));
    d.box.theta = wrap_angle(d.box.theta + sensor.sigma_theta * gauss(rng));
    Vec noise(o.embedding.size());
    for (int i = 0; i < noise.size(); ++i) noise[i] = gauss(rng);
    d.appearance = (o.embedding + sensor.sigma_app * noise).normalized();
    const double pert2 = nx * nx + ny * ny;
    d.score = sensor.sigma_pos > 0.0
                  ? std::clamp(std::exp(-pert2 / (2.0 * sensor.sigma_pos *
                                                  sensor.sigma_pos)),
                               0.05, 1.0)
                  : 1.0;
    detections.push_back(std::move(d));
    association.push_back(o.identity);
  }

  std::poisson_distribution<int> nclutter(sensor.lambda_fp);
  const int n_fp = nclutter(rng);
  const int app_dim =
      objects.empty() ? 8 : static_cast<int>(objects.front().embedding.size());
  std::uniform_real_distribution<double> upos(-sensor.r_max * 0.7,
                                              sensor.r_max * 0.7);
  std::uniform_real_distribution<double> udim_l(3.5, 7.0), udim_w(1.8, 2.6);
  std::uniform_real_distribution<double> uang(-kPi, kPi);
  for (int k = 0; k < n_fp; ++k) {
    Detection d;
    bool placed = false;
    for (int attempt = 0; attempt < 50 && !placed; ++attempt) {
      d.box = OrientedBox{upos(rng), upos(rng), 0.9, 1.7,       udim_l(rng),
                          udim_w(rng), 0.0, 0.0, uang(rng)};
      placed = true;
      // Clutter that overlaps a real object or an existing detection would
      // make the oracle labels ambiguous; resample.
      for (const auto& o : objects)
        if (scm::iou_bev(d.box, to_ego_box(o.box(), ego.pose)) >= tau_iou * 0.5)
          placed = false;
      for (const auto& e : detections)
        if (scm::iou_bev(d.box, e.box) >= tau_iou * 0.5) placed = false;
    }
    if (!placed) continue;
    Vec a(app_dim);
    for (int i = 0; i < app_dim; ++i) a[i] = gauss(rng);
    d.appearance = a.normalized();
    d.score = 0.05 + 0.55 * unit(rng);
    detections.push_back(std::move(d));
    association.push_back(-1);
  }
}

scm::ScmInputs track_inputs(const FrameRecord& frame, const OracleTrack& track,
                            const WorldConfig& cfg) {
  scm::ScmInputs in;
  in.forecast = constant_velocity_forecast(track.box_prev, cfg.dt);
  in.box_prev = track.box_prev;
  in.track_appearance = track.appearance;
  for (const auto& d : frame.detections) {
    in.detection_appearances.push_back(d.appearance);
    in.detection_boxes.push_back(d.box);
  }
  in.ego = frame.ego;
  in.grid = frame.grid;
  in.r_max = cfg.sensor.r_max;
  in.tau_iou = cfg.tau_iou;
  in.tau_app = cfg.tau_app;
  in.oracle_available = true;
  in.oracle_match_index = -1;
  for (size_t i = 0; i < frame.association.size(); ++i) {
    if (frame.association[i] == track.identity && !track.phantom) {
      in.oracle_match_index = static_cast<int>(i);
      break;
    }
  }
  return in;
}

scm::ScmInputs detection_inputs(const FrameRecord& frame, int det_index,
                                const WorldConfig& cfg) {
  scm::ScmInputs in;
  in.r_max = cfg.sensor.r_max;
  in.tau_iou = cfg.tau_iou;
  in.tau_app = cfg.tau_app;
  in.ego = frame.ego;
  in.grid = frame.grid;
  in.oracle_available = true;
  in.candidate_detection_index = det_index;

  const int identity = frame.association.at(det_index);
  in.appearance_valid = identity >= 0;
  in.bbox_valid = false;
  if (identity >= 0) {
    for (const auto& o : frame.objects) {
      if (o.identity != identity) continue;
      OrientedBox gt = o.box();
      const Eigen::Vector2d p = to_ego_frame(gt.x, gt.y, frame.ego.pose);
      gt.x = p.x();
      gt.y = p.y();
      gt.theta = wrap_angle(gt.theta - frame.ego.pose.heading);
      in.bbox_valid =
          scm::iou_bev(frame.detections[det_index].box, gt) >= cfg.tau_iou;
      break;
    }
  }
  in.matches_any_track = false;
  for (const auto& t : frame.tracks)
    if (!t.phantom && t.identity == identity && identity >= 0)
      in.matches_any_track = true;
  return in;
}

std::vector<DecisionLabel> label_decisions(const FrameRecord& frame,
                                           const WorldConfig& cfg) {
  std::vector<DecisionLabel> labels;

  // Inconsistent oracle guard: an identity associated to two detections.
  std::set<int> seen;
  for (int id : frame.association) {
    if (id < 0) continue;
    if (seen.count(id)) throw scm::ScmError("oracle associates one identity twice");
    seen.insert(id);
  }

  for (const auto& track : frame.tracks) {
    scm::ScmInputs in = track_inputs(frame, track, cfg);
    DecisionLabel lbl;
    lbl.track_subject = true;
    lbl.subject = track.identity;
    if (in.oracle_match_index >= 0) {
      lbl.kind = scm::DecisionKind::AppearanceMatch;
      lbl.partner = in.oracle_match_index;
      scm::ScmInputs pair = in;
      pair.candidate_detection_index = in.oracle_match_index;
      lbl.bbox_admissible = scm::decide(scm::DecisionKind::BboxMatch, pair);
    } else {
      bool assigned = false;
      for (scm::DecisionKind k : {scm::DecisionKind::OutOfRangeTrack,
                                  scm::DecisionKind::OccludedTrack,
                                  scm::DecisionKind::FalsePositiveTrack}) {
        if (scm::decide(k, in, cfg.matches_any)) {
          lbl.kind = k;
          assigned = true;
          break;
        }
      }
      if (!assigned) {
        // The predicted box geometrically overlaps someone else's detection;
        // record the bbox match so every track carries exactly one label.
        const OrientedBox pred = scm::predicted_bbox_at_t(
            in.forecast, in.box_prev, in.ego);
        auto idx = scm::matches_bbox(pred, in.detection_boxes, cfg.tau_iou);
        lbl.kind = scm::DecisionKind::BboxMatch;
        lbl.partner = idx.value_or(-1);
        lbl.bbox_admissible = true;
      }
    }
    labels.push_back(lbl);
  }

  for (int d = 0; d < static_cast<int>(frame.detections.size()); ++d) {
    scm::ScmInputs in = detection_inputs(frame, d, cfg);
    DecisionLabel lbl;
    lbl.track_subject = false;
    lbl.subject = d;
    const int identity = frame.association[d];
    if (identity < 0) {
      lbl.kind = scm::DecisionKind::FalsePositiveDetection;
    } else if (in.matches_any_track) {
      lbl.kind = scm::DecisionKind::AppearanceMatch;
      lbl.partner = identity;
    } else {
      lbl.kind = scm::DecisionKind::NewbornTrack;
    }
    labels.push_back(lbl);
  }
  return labels;
}

std::vector<FrameRecord> simulate_sequence(const WorldConfig& cfg,
                                           int sequence_index) {
  std::seed_seq seq{cfg.seed, static_cast<uint64_t>(sequence_index),
                    uint64_t{0x17ac5ee0}};
  std::mt19937_64 rng(seq);

  std::uniform_int_distribution<int> nobj(cfg.min_objects, cfg.max_objects);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss;

  EgoState ego;
  ego.pose = {0.0, 0.0, 0.0};
  ego.vx = cfg.ego_speed;
  ego.vy = 0.0;

  // Lane traffic parallel to the ego's path: distinct lanes and generous
  // in-lane gaps keep ground-truth boxes from ever overlapping.
  const int n = nobj(rng);
  std::vector<ObjectState> objects;
  std::uniform_int_distribution<int> lane_pick(0, cfg.num_lanes - 1);
  std::uniform_real_distribution<double> uspeed(cfg.speed_min, cfg.speed_max);
  std::vector<double> lane_speed(cfg.num_lanes);
  std::vector<int> lane_dir(cfg.num_lanes);
  std::vector<std::vector<double>> lane_slots(cfg.num_lanes);
  for (int l = 0; l < cfg.num_lanes; ++l) {
    lane_speed[l] = uspeed(rng);
    lane_dir[l] = (l % 2 == 0) ? 1 : -1;
  }
  std::uniform_real_distribution<double> ux(-45.0, 45.0);
  for (int i = 0; i < n; ++i) {
    ObjectState o;
    o.identity = i;
    int lane = lane_pick(rng);
    double x = 0.0;
    bool ok = false;
    for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
      lane = lane_pick(rng);
      x = ux(rng);
      ok = true;
      for (double sx : lane_slots[lane])
        if (std::abs(sx - x) < 12.0) ok = false;
    }
    if (!ok) continue;
    lane_slots[lane].push_back(x);
    const double y = (lane - (cfg.num_lanes - 1) / 2.0) * cfg.lane_width +
                     (lane >= cfg.num_lanes / 2 ? cfg.lane_width : 0.0);
    o.pose = {x, y, lane_dir[lane] > 0 ? 0.0 : kPi};
    const double speed = lane_speed[lane] + 0.5 * gauss(rng);
    o.vx = lane_dir[lane] * std::max(0.5, speed);
    o.vy = 0.0;
    // Trucks in odd lanes show up now and then; everything else is car-sized.
    if (unit(rng) < 0.25) {
      o.h = 2.8;
      o.l = 7.5;
      o.w = 2.5;
    }
    o.embedding = Vec(cfg.appearance_dim);
    for (int j = 0; j < cfg.appearance_dim; ++j) o.embedding[j] = gauss(rng);
    o.embedding.normalize();
    objects.push_back(o);
  }

  std::vector<FrameRecord> frames;
  std::vector<OracleTrack> live;
  int next_phantom_id = -2;

  for (int t = 0; t < cfg.frames; ++t) {
    if (t > 0) step_world(objects, ego, cfg.dt, rng, cfg.heading_jitter);

    FrameRecord fr;
    fr.t = t;
    fr.ego = ego;
    fr.objects = objects;
    fr.grid = raycast_occlusion(ego, objects, cfg.sensor.grid_extent,
                                cfg.sensor.grid_cell);
    emulate_detector(objects, ego, fr.grid, cfg.sensor, cfg.tau_iou, rng,
                     fr.detections, fr.association);
    fr.tracks = live;
    fr.labels = label_decisions(fr, cfg);

    // Oracle track lifecycle from the labels.
    std::vector<OracleTrack> next;
    for (size_t i = 0; i < fr.tracks.size(); ++i) {
      const DecisionLabel& lbl = fr.labels[i];
      const OracleTrack& tr = fr.tracks[i];
      if (lbl.kind == scm::DecisionKind::OutOfRangeTrack ||
          lbl.kind == scm::DecisionKind::FalsePositiveTrack)
        continue;
      OracleTrack updated = tr;
      bool found = false;
      for (const auto& o : objects) {
        if (o.identity == tr.identity && !tr.phantom) {
          updated.box_prev = o.box();
          found = true;
          break;
        }
      }
      if (!found && tr.phantom) {
        // Coast the phantom one step so its next label stays well defined.
        updated.box_prev.x += updated.box_prev.vx * cfg.dt;
        updated.box_prev.y += updated.box_prev.vy * cfg.dt;
      }
      next.push_back(updated);
    }
    for (const auto& lbl : fr.labels) {
      if (lbl.track_subject) continue;
      const int d = lbl.subject;
      if (lbl.kind == scm::DecisionKind::NewbornTrack) {
        OracleTrack tr;
        tr.identity = fr.association[d];
        for (const auto& o : objects) {
          if (o.identity == tr.identity) {
            tr.box_prev = o.box();
            tr.appearance = o.embedding;
          }
        }
        next.push_back(tr);
      } else if (lbl.kind == scm::DecisionKind::FalsePositiveDetection &&
                 unit(rng) < cfg.phantom_spawn_prob) {
        OracleTrack tr;
        tr.identity = next_phantom_id--;
        tr.phantom = true;
        tr.box_prev = to_world_box(fr.detections[d].box, ego.pose);
        tr.appearance = fr.detections[d].appearance;
        next.push_back(tr);
      }
    }
    live = std::move(next);
    frames.push_back(std::move(fr));
  }
  return frames;
}

void generate_dataset(const WorldConfig& cfg, const std::string& out_dir,
                      bool force) {
  namespace fs = std::filesystem;
  fs::path dir(out_dir);
  if (fs::exists(dir) && !fs::is_empty(dir) && !force)
    throw std::runtime_error("output directory exists and is not empty: " +
                             out_dir);
  fs::create_directories(dir);

  for (int s = 0; s < cfg.num_sequences; ++s) {
    auto frames = simulate_sequence(cfg, s);
    io::write_sequence((dir / io::sequence_filename(s)).string(), s, frames);
  }
  std::ofstream mf(dir / "manifest.txt");
  mf << "sequences " << cfg.num_sequences << "\n";
  mf << "frames_per_sequence " << cfg.frames << "\n";
  mf << "appearance_dim " << cfg.appearance_dim << "\n";
  mf << "seed " << cfg.seed << "\n";
  mf << "config_hash " << io::config_fingerprint(cfg) << "\n";
}

}  // namespace itrack::sim
