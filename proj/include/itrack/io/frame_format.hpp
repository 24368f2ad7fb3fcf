#pragma once

#include <string>
#include <vector>

#include "itrack/sim/world.hpp"

namespace itrack::io {

/// One frame as a single self-delimiting text line. Floats are printed
/// with round-trip precision, so parse(serialize(x)) == x and
/// serialize(parse(line)) == line on canonical lines.
std::string serialize_frame(const sim::FrameRecord& frame);
sim::FrameRecord parse_frame(const std::string& line);

std::string sequence_filename(int index);

void write_sequence(const std::string& path, int index,
                    const std::vector<sim::FrameRecord>& frames);
std::vector<sim::FrameRecord> read_sequence(const std::string& path);

/// Every sequence file in a dataset directory, in index order.
std::vector<std::vector<sim::FrameRecord>> read_dataset(
    const std::string& dir);

std::string base64_encode(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> base64_decode(const std::string& text);

/// Stable fingerprint of a world config (FNV-1a over its canonical text).
std::string config_fingerprint(const sim::WorldConfig& cfg);

}  // namespace itrack::io
