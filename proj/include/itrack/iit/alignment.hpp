#pragma once

#include <map>
#include <string>
#include <vector>

#include "itrack/scm/decisions.hpp"

namespace itrack::iit {

/// Column range of a named activation row.
struct Slice {
  std::string slot;
  int col = 0;
  int width = 0;
  bool operator==(const Slice&) const = default;
};

/// Where each causal-model node of one decision kind lives inside the
/// network's activation cache.
struct AlignmentMap {
  scm::DecisionKind kind = scm::DecisionKind::OccludedTrack;
  std::map<std::string, Slice> node_slice;
};

/// Default layout over the decision head's aggregate of width H: the box
/// prediction takes the first half, boolean intermediates take eighths.
AlignmentMap default_alignment(scm::DecisionKind kind, int informed_dim);

/// Throws if a slice names an unknown slot, exceeds the slot width, or
/// overlaps another slice of the same slot.
void validate_alignment(
    const AlignmentMap& map,
    const std::vector<std::pair<std::string, int>>& registry);

/// Row of the subject inside the kind's aggregate tensor. Pair kinds use
/// detection-major rows, so K (the track count) is required.
int subject_row(scm::DecisionKind kind, int index, int detection, int K);

/// The node swapped between subjects during interchange training.
const char* intervened_node(scm::DecisionKind kind);

/// Boolean nodes of the kind that carry a probe (a linear readout of the
/// aligned slice). Probe parameters are named probe.<tag>.<node>.{w,b}.
std::vector<std::string> probed_nodes(scm::DecisionKind kind);

}  // namespace itrack::iit
