#include "itrack/scm/decisions.hpp"

#include <algorithm>
#include <cmath>

namespace itrack::scm {

const char* kind_name(DecisionKind k) {
  switch (k) {
    case DecisionKind::AppearanceMatch: return "appearance_match";
    case DecisionKind::BboxMatch: return "bbox_match";
    case DecisionKind::NewbornTrack: return "newborn_track";
    case DecisionKind::FalsePositiveDetection: return "false_positive_detection";
    case DecisionKind::OutOfRangeTrack: return "out_of_range_track";
    case DecisionKind::FalsePositiveTrack: return "false_positive_track";
    case DecisionKind::OccludedTrack: return "occluded_track";
  }
  return "?";
}

std::optional<DecisionKind> kind_from_name(const std::string& name) {
  for (DecisionKind k : kAllDecisionKinds)
    if (name == kind_name(k)) return k;
  return std::nullopt;
}

OrientedBox predicted_bbox_at_t(const Forecast& forecast,
                                const OrientedBox& box_prev,
                                const EgoState& ego_t) {
  if (forecast.empty()) throw ScmError("empty forecast");
  const ForecastStep& step = forecast.front();
  const double wx = box_prev.x + step.dx;
  const double wy = box_prev.y + step.dy;
  const double wtheta = wrap_angle(box_prev.theta + step.dtheta);

  OrientedBox out = box_prev;
  const Eigen::Vector2d p = to_ego_frame(wx, wy, ego_t.pose);
  out.x = p.x();
  out.y = p.y();
  out.theta = wrap_angle(wtheta - ego_t.pose.heading);
  // Velocity rotated into the ego frame.
  const double c = std::cos(-ego_t.pose.heading), s = std::sin(-ego_t.pose.heading);
  out.vx = c * box_prev.vx - s * box_prev.vy;
  out.vy = s * box_prev.vx + c * box_prev.vy;
  return out;
}

bool is_occluded(const OrientedBox& box, const OcclusionGrid& grid) {
  if (!grid.well_formed()) throw ScmError("malformed occlusion grid");
  auto [ix, iy] = grid.cell_of(box.x, box.y);
  if (ix < 0) return false;
  return grid.at(ix, iy);
}

bool is_out_of_range(const OrientedBox& box_ego, double r_max) {
  return std::hypot(box_ego.x, box_ego.y) > r_max;
}

namespace {

using Poly = std::vector<Eigen::Vector2d>;

Poly box_corners(const OrientedBox& b) {
  const double c = std::cos(b.theta), s = std::sin(b.theta);
  const double hl = b.l / 2.0, hw = b.w / 2.0;
  Poly p(4);
  const double cx[4] = {hl, hl, -hl, -hl};
  const double cy[4] = {hw, -hw, -hw, hw};
  for (int i = 0; i < 4; ++i)
    p[i] = {b.x + c * cx[i] - s * cy[i], b.y + s * cx[i] + c * cy[i]};
  return p;
}

double poly_area(const Poly& p) {
  double a = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    const auto& u = p[i];
    const auto& v = p[(i + 1) % p.size()];
    a += u.x() * v.y() - v.x() * u.y();
  }
  return std::abs(a) / 2.0;
}

// Sutherland-Hodgman clip of subject against a convex clip polygon (CCW).
Poly clip_poly(Poly subject, const Poly& clip) {
  for (size_t i = 0; i < clip.size() && !subject.empty(); ++i) {
    const Eigen::Vector2d a = clip[i];
    const Eigen::Vector2d b = clip[(i + 1) % clip.size()];
    const Eigen::Vector2d e = b - a;
    auto inside = [&](const Eigen::Vector2d& p) {
      return e.x() * (p.y() - a.y()) - e.y() * (p.x() - a.x()) >= 0.0;
    };
    Poly out;
    for (size_t j = 0; j < subject.size(); ++j) {
      const Eigen::Vector2d& p = subject[j];
      const Eigen::Vector2d& q = subject[(j + 1) % subject.size()];
      const bool pin = inside(p), qin = inside(q);
      if (pin) out.push_back(p);
      if (pin != qin) {
        const double dp = e.x() * (p.y() - a.y()) - e.y() * (p.x() - a.x());
        const double dq = e.x() * (q.y() - a.y()) - e.y() * (q.x() - a.x());
        const double t = dp / (dp - dq);
        out.push_back(p + t * (q - p));
      }
    }
    subject = std::move(out);
  }
  return subject;
}

Poly ccw(Poly p) {
  double a = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    const auto& u = p[i];
    const auto& v = p[(i + 1) % p.size()];
    a += u.x() * v.y() - v.x() * u.y();
  }
  if (a < 0.0) std::reverse(p.begin(), p.end());
  return p;
}

double cosine(const Vec& a, const Vec& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

}  // namespace

double iou_bev(const OrientedBox& a, const OrientedBox& b) {
  const Poly pa = ccw(box_corners(a));
  const Poly pb = ccw(box_corners(b));
  const double inter = poly_area(clip_poly(pa, pb));
  const double uni = poly_area(pa) + poly_area(pb) - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::optional<int> matches_bbox(const OrientedBox& pred, const BoxList& dets,
                                double tau_iou) {
  int best = -1;
  double best_iou = -1.0;
  for (int i = 0; i < static_cast<int>(dets.size()); ++i) {
    const double v = iou_bev(pred, dets[i]);
    if (v > best_iou) {
      best_iou = v;
      best = i;
    }
  }
  if (best >= 0 && best_iou >= tau_iou) return best;
  return std::nullopt;
}

std::optional<int> matches_appearance(const Vec& track_app,
                                      const FeatureList& det_apps,
                                      bool oracle_available,
                                      int oracle_match_index, double tau_app) {
  if (oracle_available) {
    if (oracle_match_index >= 0) return oracle_match_index;
    return std::nullopt;
  }
  int best = -1;
  double best_cos = -2.0;
  for (int i = 0; i < static_cast<int>(det_apps.size()); ++i) {
    const double v = cosine(track_app, det_apps[i]);
    if (v > best_cos) {
      best_cos = v;
      best = i;
    }
  }
  if (best >= 0 && best_cos >= tau_app) return best;
  return std::nullopt;
}

std::pair<bool, bool> detection_validity(
    int det_index, bool oracle_available,
    const std::vector<std::pair<bool, bool>>& flags) {
  if (!oracle_available) throw ScmError("detection_validity requires an oracle");
  if (det_index < 0 || det_index >= static_cast<int>(flags.size()))
    throw ScmError("detection index out of range");
  return flags[det_index];
}

// ---- graph wiring ----------------------------------------------------------

namespace {

void add_track_core(CausalGraph& g) {
  g.add_input("track_motion_forecast", ValueTag::FeatureVector);
  g.add_input("track_bbox_prev", ValueTag::OrientedBox);
  g.add_input("ego_state", ValueTag::Pose2d);
  g.add_node("predicted_bbox_at_t", ValueTag::OrientedBox,
             {"track_motion_forecast", "track_bbox_prev", "ego_state"},
             [](std::span<const NodeValue> a) {
               const Vec& f = a[0].as_feature();
               Forecast fc;
               for (int i = 0; i + 2 < f.size(); i += 3)
                 fc.push_back({f[i], f[i + 1], f[i + 2]});
               EgoState ego;
               ego.pose = a[2].as_pose();
               return NodeValue(predicted_bbox_at_t(fc, a[1].as_box(), ego));
             });
}

Vec flatten_forecast(const Forecast& f) {
  Vec v(3 * static_cast<int>(f.size()));
  for (size_t i = 0; i < f.size(); ++i) {
    v[3 * i] = f[i].dx;
    v[3 * i + 1] = f[i].dy;
    v[3 * i + 2] = f[i].dtheta;
  }
  return v;
}

void add_match_nodes(CausalGraph& g, MatchesAnyMode mode) {
  g.add_input("detection_bboxes", ValueTag::BoxList);
  g.add_input("iou_threshold", ValueTag::Scalar);
  g.add_input("track_appearance", ValueTag::FeatureVector);
  g.add_input("detection_appearances", ValueTag::FeatureList);
  g.add_input("appearance_threshold", ValueTag::Scalar);
  g.add_input("oracle_available", ValueTag::Boolean);
  g.add_input("oracle_match_index", ValueTag::Scalar);

  g.add_node("matches_bbox", ValueTag::Boolean,
             {"predicted_bbox_at_t", "detection_bboxes", "iou_threshold"},
             [](std::span<const NodeValue> a) {
               return NodeValue(matches_bbox(a[0].as_box(), a[1].as_box_list(),
                                             a[2].as_scalar())
                                    .has_value());
             });
  g.add_node("matches_appearance", ValueTag::Boolean,
             {"track_appearance", "detection_appearances", "oracle_available",
              "oracle_match_index", "appearance_threshold"},
             [](std::span<const NodeValue> a) {
               return NodeValue(
                   matches_appearance(a[0].as_feature(), a[1].as_feature_list(),
                                      a[2].as_bool(),
                                      static_cast<int>(a[3].as_scalar()),
                                      a[4].as_scalar())
                       .has_value());
             });
  if (mode == MatchesAnyMode::Or) {
    g.add_node("matches_any_detection", ValueTag::Boolean,
               {"matches_appearance", "matches_bbox"},
               [](std::span<const NodeValue> a) {
                 return NodeValue(a[0].as_bool() || a[1].as_bool());
               });
  } else {
    g.add_node("matches_any_detection", ValueTag::Boolean,
               {"matches_appearance"}, [](std::span<const NodeValue> a) {
                 return NodeValue(a[0].as_bool());
               });
  }
}

void add_range_node(CausalGraph& g) {
  g.add_input("range_threshold", ValueTag::Scalar);
  g.add_node("is_out_of_range", ValueTag::Boolean,
             {"predicted_bbox_at_t", "range_threshold"},
             [](std::span<const NodeValue> a) {
               return NodeValue(is_out_of_range(a[0].as_box(), a[1].as_scalar()));
             });
}

void add_occlusion_node(CausalGraph& g) {
  g.add_input("occluded_area", ValueTag::OccupancyGrid);
  g.add_node("is_occluded", ValueTag::Boolean,
             {"predicted_bbox_at_t", "occluded_area"},
             [](std::span<const NodeValue> a) {
               return NodeValue(is_occluded(a[0].as_box(), a[1].as_grid()));
             });
}

void add_validity_nodes(CausalGraph& g) {
  g.add_input("appearance_valid", ValueTag::Boolean);
  g.add_input("bbox_valid", ValueTag::Boolean);
  g.add_node("is_valid_detection", ValueTag::Boolean,
             {"appearance_valid", "bbox_valid"},
             [](std::span<const NodeValue> a) {
               return NodeValue(a[0].as_bool() || a[1].as_bool());
             });
}

}  // namespace

CausalGraph build_scm(DecisionKind kind, MatchesAnyMode mode) {
  CausalGraph g;
  switch (kind) {
    case DecisionKind::OccludedTrack:
      add_track_core(g);
      add_match_nodes(g, mode);
      add_range_node(g);
      add_occlusion_node(g);
      g.add_node("occluded_track", ValueTag::Boolean,
                 {"is_occluded", "is_out_of_range", "matches_any_detection"},
                 [](std::span<const NodeValue> a) {
                   return NodeValue(a[0].as_bool() && !a[1].as_bool() &&
                                    !a[2].as_bool());
                 });
      g.set_output("occluded_track");
      break;
    case DecisionKind::OutOfRangeTrack:
      add_track_core(g);
      add_match_nodes(g, mode);
      add_range_node(g);
      g.add_node("out_of_range_track", ValueTag::Boolean,
                 {"is_out_of_range", "matches_any_detection"},
                 [](std::span<const NodeValue> a) {
                   return NodeValue(a[0].as_bool() && !a[1].as_bool());
                 });
      g.set_output("out_of_range_track");
      break;
    case DecisionKind::FalsePositiveTrack:
      add_track_core(g);
      add_match_nodes(g, mode);
      add_range_node(g);
      add_occlusion_node(g);
      g.add_node("false_positive_track", ValueTag::Boolean,
                 {"is_occluded", "is_out_of_range", "matches_any_detection"},
                 [](std::span<const NodeValue> a) {
                   return NodeValue(!a[0].as_bool() && !a[1].as_bool() &&
                                    !a[2].as_bool());
                 });
      g.set_output("false_positive_track");
      break;
    case DecisionKind::NewbornTrack:
      add_validity_nodes(g);
      g.add_input("matches_any_track", ValueTag::Boolean);
      g.add_node("newborn_track", ValueTag::Boolean,
                 {"is_valid_detection", "matches_any_track"},
                 [](std::span<const NodeValue> a) {
                   return NodeValue(a[0].as_bool() && !a[1].as_bool());
                 });
      g.set_output("newborn_track");
      break;
    case DecisionKind::FalsePositiveDetection:
      add_validity_nodes(g);
      g.add_node("false_positive_detection", ValueTag::Boolean,
                 {"is_valid_detection"}, [](std::span<const NodeValue> a) {
                   return NodeValue(!a[0].as_bool());
                 });
      g.set_output("false_positive_detection");
      break;
    case DecisionKind::AppearanceMatch:
      g.add_input("track_appearance", ValueTag::FeatureVector);
      g.add_input("detection_appearances", ValueTag::FeatureList);
      g.add_input("appearance_threshold", ValueTag::Scalar);
      g.add_input("oracle_available", ValueTag::Boolean);
      g.add_input("oracle_match_index", ValueTag::Scalar);
      g.add_input("candidate_detection_index", ValueTag::Scalar);
      g.add_node("appearance_match_index", ValueTag::Scalar,
                 {"track_appearance", "detection_appearances",
                  "oracle_available", "oracle_match_index",
                  "appearance_threshold"},
                 [](std::span<const NodeValue> a) {
                   auto idx = matches_appearance(
                       a[0].as_feature(), a[1].as_feature_list(), a[2].as_bool(),
                       static_cast<int>(a[3].as_scalar()), a[4].as_scalar());
                   return NodeValue(static_cast<double>(idx.value_or(-1)));
                 });
      g.add_node("matches_this_detection", ValueTag::Boolean,
                 {"appearance_match_index", "candidate_detection_index"},
                 [](std::span<const NodeValue> a) {
                   const int idx = static_cast<int>(a[0].as_scalar());
                   return NodeValue(idx >= 0 &&
                                    idx == static_cast<int>(a[1].as_scalar()));
                 });
      g.add_node("appearance_match", ValueTag::Boolean,
                 {"matches_this_detection"}, [](std::span<const NodeValue> a) {
                   return NodeValue(a[0].as_bool());
                 });
      g.set_output("appearance_match");
      break;
    case DecisionKind::BboxMatch:
      add_track_core(g);
      g.add_input("detection_bboxes", ValueTag::BoxList);
      g.add_input("iou_threshold", ValueTag::Scalar);
      g.add_input("candidate_detection_index", ValueTag::Scalar);
      g.add_node("bbox_match_index", ValueTag::Scalar,
                 {"predicted_bbox_at_t", "detection_bboxes", "iou_threshold"},
                 [](std::span<const NodeValue> a) {
                   auto idx = matches_bbox(a[0].as_box(), a[1].as_box_list(),
                                           a[2].as_scalar());
                   return NodeValue(static_cast<double>(idx.value_or(-1)));
                 });
      g.add_node("matches_this_detection", ValueTag::Boolean,
                 {"bbox_match_index", "candidate_detection_index"},
                 [](std::span<const NodeValue> a) {
                   const int idx = static_cast<int>(a[0].as_scalar());
                   return NodeValue(idx >= 0 &&
                                    idx == static_cast<int>(a[1].as_scalar()));
                 });
      g.add_node("bbox_match", ValueTag::Boolean, {"matches_this_detection"},
                 [](std::span<const NodeValue> a) {
                   return NodeValue(a[0].as_bool());
                 });
      g.set_output("bbox_match");
      break;
  }
  return g;
}

Assignment to_assignment(DecisionKind kind, const ScmInputs& in) {
  Assignment a;
  const CausalGraph g = build_scm(kind);
  auto put = [&](const std::string& name, NodeValue v) {
    if (g.inputs().count(name)) a.emplace(name, std::move(v));
  };
  put("track_motion_forecast", NodeValue(flatten_forecast(in.forecast)));
  put("track_bbox_prev", NodeValue(in.box_prev));
  put("ego_state", NodeValue(in.ego.pose));
  put("detection_bboxes", NodeValue(in.detection_boxes));
  put("iou_threshold", NodeValue(in.tau_iou));
  put("track_appearance", NodeValue(in.track_appearance));
  put("detection_appearances", NodeValue(in.detection_appearances));
  put("appearance_threshold", NodeValue(in.tau_app));
  put("oracle_available", NodeValue(in.oracle_available));
  put("oracle_match_index", NodeValue(static_cast<double>(in.oracle_match_index)));
  put("range_threshold", NodeValue(in.r_max));
  put("occluded_area", NodeValue(in.grid));
  put("appearance_valid", NodeValue(in.appearance_valid));
  put("bbox_valid", NodeValue(in.bbox_valid));
  put("matches_any_track", NodeValue(in.matches_any_track));
  put("candidate_detection_index",
      NodeValue(static_cast<double>(in.candidate_detection_index)));
  return a;
}

bool decide(DecisionKind kind, const ScmInputs& in, MatchesAnyMode mode) {
  const CausalGraph g = build_scm(kind, mode);
  auto values = g.forward(to_assignment(kind, in), {});
  return values.at(g.output()).as_bool();
}

bool redecide(DecisionKind kind, const ProbedBooleans& b, MatchesAnyMode mode) {
  const bool matches_any =
      mode == MatchesAnyMode::Or
          ? (b.matches_appearance || b.matches_bbox)
          : b.matches_appearance;
  switch (kind) {
    case DecisionKind::OccludedTrack:
      return b.is_occluded && !b.is_out_of_range && !matches_any;
    case DecisionKind::OutOfRangeTrack:
      return b.is_out_of_range && !matches_any;
    case DecisionKind::FalsePositiveTrack:
      return !b.is_occluded && !b.is_out_of_range && !matches_any;
    case DecisionKind::NewbornTrack:
      return b.is_valid_detection && !b.matches_any_track;
    case DecisionKind::FalsePositiveDetection:
      return !b.is_valid_detection;
    case DecisionKind::AppearanceMatch:
    case DecisionKind::BboxMatch:
      return b.matches_this_detection;
  }
  return false;
}

std::vector<std::string> boolean_intermediates(DecisionKind kind) {
  switch (kind) {
    case DecisionKind::OccludedTrack:
    case DecisionKind::FalsePositiveTrack:
      return {"is_occluded", "is_out_of_range", "matches_appearance",
              "matches_bbox"};
    case DecisionKind::OutOfRangeTrack:
      return {"is_out_of_range", "matches_appearance", "matches_bbox"};
    case DecisionKind::NewbornTrack:
      return {"is_valid_detection", "matches_any_track"};
    case DecisionKind::FalsePositiveDetection:
      return {"is_valid_detection"};
    case DecisionKind::AppearanceMatch:
    case DecisionKind::BboxMatch:
      return {"matches_this_detection"};
  }
  return {};
}

}  // namespace itrack::scm
