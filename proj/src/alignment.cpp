#include "itrack/iit/alignment.hpp"

#include <stdexcept>

#include "itrack/net/tracker_net.hpp"

namespace itrack::iit {

using scm::DecisionKind;

AlignmentMap default_alignment(DecisionKind kind, int informed_dim) {
  if (informed_dim % 8 != 0)
    throw std::invalid_argument("informed_dim must be a multiple of 8");
  const int e = informed_dim / 8;
  AlignmentMap m;
  m.kind = kind;
  const std::string tag = net::head_tag(kind);
  switch (kind) {
    case DecisionKind::OccludedTrack:
    case DecisionKind::FalsePositiveTrack: {
      const std::string slot = tag + ".track_agg";
      m.node_slice["predicted_bbox_at_t"] = {slot, 0, 4 * e};
      m.node_slice["is_occluded"] = {slot, 4 * e, e};
      m.node_slice["is_out_of_range"] = {slot, 5 * e, e};
      m.node_slice["matches_appearance"] = {slot, 6 * e, e};
      m.node_slice["matches_bbox"] = {slot, 7 * e, e};
      break;
    }
    case DecisionKind::OutOfRangeTrack: {
      const std::string slot = tag + ".track_agg";
      m.node_slice["predicted_bbox_at_t"] = {slot, 0, 4 * e};
      m.node_slice["is_out_of_range"] = {slot, 5 * e, e};
      m.node_slice["matches_appearance"] = {slot, 6 * e, e};
      m.node_slice["matches_bbox"] = {slot, 7 * e, e};
      break;
    }
    case DecisionKind::BboxMatch: {
      const std::string slot = "bbox.pair_agg";
      m.node_slice["predicted_bbox_at_t"] = {slot, 0, 4 * e};
      m.node_slice["bbox_match_index"] = {slot, 4 * e, 2 * e};
      m.node_slice["matches_this_detection"] = {slot, 6 * e, 2 * e};
      break;
    }
    case DecisionKind::AppearanceMatch: {
      const std::string slot = "app.pair_agg";
      m.node_slice["appearance_match_index"] = {slot, 0, 4 * e};
      m.node_slice["matches_this_detection"] = {slot, 4 * e, 4 * e};
      break;
    }
    case DecisionKind::NewbornTrack: {
      const std::string slot = "newborn.det_agg";
      m.node_slice["is_valid_detection"] = {slot, 0, 4 * e};
      m.node_slice["matches_any_track"] = {slot, 4 * e, 4 * e};
      break;
    }
    case DecisionKind::FalsePositiveDetection: {
      m.node_slice["is_valid_detection"] = {"fpdet.det_agg", 0, 8 * e};
      break;
    }
  }
  return m;
}

void validate_alignment(
    const AlignmentMap& map,
    const std::vector<std::pair<std::string, int>>& registry) {
  auto width_of = [&](const std::string& slot) {
    for (const auto& [name, cols] : registry)
      if (name == slot) return cols;
    throw std::invalid_argument("alignment names unknown slot: " + slot);
  };
  for (const auto& [node, s] : map.node_slice) {
    if (s.width <= 0 || s.col < 0 || s.col + s.width > width_of(s.slot))
      throw std::invalid_argument("alignment slice out of bounds: " + node);
    for (const auto& [other, t] : map.node_slice) {
      if (other == node || t.slot != s.slot) continue;
      if (s.col < t.col + t.width && t.col < s.col + s.width)
        throw std::invalid_argument("alignment slices overlap: " + node +
                                    " and " + other);
    }
  }
}

int subject_row(DecisionKind kind, int index, int detection, int K) {
  switch (kind) {
    case DecisionKind::AppearanceMatch:
    case DecisionKind::BboxMatch:
      if (detection < 0) throw std::invalid_argument("pair row needs detection");
      return detection * K + index;
    default:
      return index;
  }
}

const char* intervened_node(DecisionKind kind) {
  switch (kind) {
    case DecisionKind::AppearanceMatch:
      return "appearance_match_index";
    case DecisionKind::NewbornTrack:
    case DecisionKind::FalsePositiveDetection:
      return "is_valid_detection";
    default:
      return "predicted_bbox_at_t";
  }
}

std::vector<std::string> probed_nodes(DecisionKind kind) {
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

}  // namespace itrack::iit
