#include "itrack/io/frame_format.hpp"

#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace itrack::io {

namespace {

constexpr char kB64[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct TokenReader {
  std::istringstream is;
  explicit TokenReader(const std::string& line) : is(line) {}

  std::string word() {
    std::string w;
    if (!(is >> w)) throw std::runtime_error("frame line truncated");
    return w;
  }
  void expect(const char* tag) {
    const std::string w = word();
    if (w != tag)
      throw std::runtime_error(std::string("expected '") + tag + "' got '" +
                               w + "'");
  }
  double num() {
    const std::string w = word();
    return std::strtod(w.c_str(), nullptr);
  }
  int integer() { return static_cast<int>(std::strtol(word().c_str(), nullptr, 10)); }
};

void put_vec(std::ostringstream& os, const Vec& v) {
  os << ' ' << v.size();
  for (int i = 0; i < v.size(); ++i) os << ' ' << fmt(v[i]);
}

Vec get_vec(TokenReader& r) {
  const int n = r.integer();
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = r.num();
  return v;
}

void put_box(std::ostringstream& os, const OrientedBox& b) {
  for (double v : {b.x, b.y, b.z, b.h, b.l, b.w, b.vx, b.vy, b.theta})
    os << ' ' << fmt(v);
}

OrientedBox get_box(TokenReader& r) {
  OrientedBox b;
  b.x = r.num();
  b.y = r.num();
  b.z = r.num();
  b.h = r.num();
  b.l = r.num();
  b.w = r.num();
  b.vx = r.num();
  b.vy = r.num();
  b.theta = r.num();
  return b;
}

}  // namespace

std::string base64_encode(const std::vector<uint8_t>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (size_t i = 0; i < bytes.size(); i += 3) {
    uint32_t v = bytes[i] << 16;
    if (i + 1 < bytes.size()) v |= bytes[i + 1] << 8;
    if (i + 2 < bytes.size()) v |= bytes[i + 2];
    out.push_back(kB64[(v >> 18) & 63]);
    out.push_back(kB64[(v >> 12) & 63]);
    out.push_back(i + 1 < bytes.size() ? kB64[(v >> 6) & 63] : '=');
    out.push_back(i + 2 < bytes.size() ? kB64[v & 63] : '=');
  }
  if (out.empty()) out = "=";  // keep the token non-empty
  return out;
}

std::vector<uint8_t> base64_decode(const std::string& text) {
  auto val = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<uint8_t> out;
  uint32_t acc = 0;
  int bits = 0;
  for (char c : text) {
    const int v = val(c);
    if (v < 0) continue;
    acc = (acc << 6) | v;
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back((acc >> bits) & 0xff);
    }
  }
  return out;
}

std::string serialize_frame(const sim::FrameRecord& f) {
  std::ostringstream os;
  os << "T " << f.t;
  os << " EGO " << fmt(f.ego.pose.x) << ' ' << fmt(f.ego.pose.y) << ' '
     << fmt(f.ego.pose.heading) << ' ' << fmt(f.ego.vx) << ' ' << fmt(f.ego.vy);

  os << " OBJS " << f.objects.size();
  for (const auto& o : f.objects) {
    os << ' ' << o.identity << ' ' << fmt(o.pose.x) << ' ' << fmt(o.pose.y)
       << ' ' << fmt(o.pose.heading) << ' ' << fmt(o.vx) << ' ' << fmt(o.vy)
       << ' ' << fmt(o.h) << ' ' << fmt(o.l) << ' ' << fmt(o.w);
    put_vec(os, o.embedding);
  }

  os << " DETS " << f.detections.size();
  for (const auto& d : f.detections) {
    put_box(os, d.box);
    os << ' ' << fmt(d.score);
    put_vec(os, d.appearance);
  }

  os << " GRID " << fmt(f.grid.origin.x) << ' ' << fmt(f.grid.origin.y) << ' '
     << fmt(f.grid.origin.heading) << ' ' << fmt(f.grid.cell_size) << ' '
     << f.grid.width << ' ' << f.grid.height;
  std::vector<uint8_t> packed((f.grid.mask.size() + 7) / 8, 0);
  for (size_t i = 0; i < f.grid.mask.size(); ++i)
    if (f.grid.mask[i]) packed[i / 8] |= 1u << (i % 8);
  os << ' ' << base64_encode(packed);

  os << " ASSOC " << f.association.size();
  for (int a : f.association) os << ' ' << a;

  os << " TRKS " << f.tracks.size();
  for (const auto& t : f.tracks) {
    os << ' ' << t.identity << ' ' << (t.phantom ? 1 : 0);
    put_box(os, t.box_prev);
    put_vec(os, t.appearance);
  }

  os << " LABELS " << f.labels.size();
  for (const auto& l : f.labels) {
    os << ' ' << (l.track_subject ? 1 : 0) << ' ' << l.subject << ' '
       << scm::kind_name(l.kind) << ' ' << l.partner << ' '
       << (l.bbox_admissible ? 1 : 0);
  }
  return os.str();
}

sim::FrameRecord parse_frame(const std::string& line) {
  TokenReader r(line);
  sim::FrameRecord f;
  r.expect("T");
  f.t = r.integer();
  r.expect("EGO");
  f.ego.pose.x = r.num();
  f.ego.pose.y = r.num();
  f.ego.pose.heading = r.num();
  f.ego.vx = r.num();
  f.ego.vy = r.num();

  r.expect("OBJS");
  const int nobj = r.integer();
  for (int i = 0; i < nobj; ++i) {
    sim::ObjectState o;
    o.identity = r.integer();
    o.pose.x = r.num();
    o.pose.y = r.num();
    o.pose.heading = r.num();
    o.vx = r.num();
    o.vy = r.num();
    o.h = r.num();
    o.l = r.num();
    o.w = r.num();
    o.embedding = get_vec(r);
    f.objects.push_back(std::move(o));
  }

  r.expect("DETS");
  const int ndet = r.integer();
  for (int i = 0; i < ndet; ++i) {
    sim::Detection d;
    d.box = get_box(r);
    d.score = r.num();
    d.appearance = get_vec(r);
    f.detections.push_back(std::move(d));
  }

  r.expect("GRID");
  f.grid.origin.x = r.num();
  f.grid.origin.y = r.num();
  f.grid.origin.heading = r.num();
  f.grid.cell_size = r.num();
  f.grid.width = r.integer();
  f.grid.height = r.integer();
  const auto packed = base64_decode(r.word());
  f.grid.mask.assign(static_cast<size_t>(f.grid.width) * f.grid.height, 0);
  for (size_t i = 0; i < f.grid.mask.size(); ++i)
    if (i / 8 < packed.size() && (packed[i / 8] >> (i % 8)) & 1)
      f.grid.mask[i] = 1;

  r.expect("ASSOC");
  const int nass = r.integer();
  for (int i = 0; i < nass; ++i) f.association.push_back(r.integer());

  r.expect("TRKS");
  const int ntrk = r.integer();
  for (int i = 0; i < ntrk; ++i) {
    sim::OracleTrack t;
    t.identity = r.integer();
    t.phantom = r.integer() != 0;
    t.box_prev = get_box(r);
    t.appearance = get_vec(r);
    f.tracks.push_back(std::move(t));
  }

  r.expect("LABELS");
  const int nlbl = r.integer();
  for (int i = 0; i < nlbl; ++i) {
    sim::DecisionLabel l;
    l.track_subject = r.integer() != 0;
    l.subject = r.integer();
    auto kind = scm::kind_from_name(r.word());
    if (!kind) throw std::runtime_error("unknown decision kind in frame line");
    l.kind = *kind;
    l.partner = r.integer();
    l.bbox_admissible = r.integer() != 0;
    f.labels.push_back(l);
  }
  return f;
}

std::string sequence_filename(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "seq_%04d.txt", index);
  return buf;
}

void write_sequence(const std::string& path, int index,
                    const std::vector<sim::FrameRecord>& frames) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "SEQ " << index << " FRAMES " << frames.size() << "\n";
  for (const auto& f : frames) out << serialize_frame(f) << "\n";
}

std::vector<sim::FrameRecord> read_sequence(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string header;
  std::getline(in, header);
  std::vector<sim::FrameRecord> frames;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    frames.push_back(parse_frame(line));
  }
  return frames;
}

std::vector<std::vector<sim::FrameRecord>> read_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("seq_", 0) == 0) files.push_back(e.path().string());
  }
  std::sort(files.begin(), files.end());
  std::vector<std::vector<sim::FrameRecord>> out;
  for (const auto& f : files) out.push_back(read_sequence(f));
  return out;
}

std::string config_fingerprint(const sim::WorldConfig& cfg) {
  std::ostringstream os;
  os << cfg.num_sequences << ' ' << cfg.frames << ' ' << cfg.min_objects << ' '
     << cfg.max_objects << ' ' << cfg.appearance_dim << ' ' << fmt(cfg.dt)
     << ' ' << fmt(cfg.ego_speed) << ' ' << fmt(cfg.lane_width) << ' '
     << cfg.num_lanes << ' ' << fmt(cfg.speed_min) << ' ' << fmt(cfg.speed_max)
     << ' ' << fmt(cfg.heading_jitter) << ' ' << fmt(cfg.phantom_spawn_prob)
     << ' ' << fmt(cfg.tau_iou) << ' ' << fmt(cfg.tau_app) << ' '
     << static_cast<int>(cfg.matches_any) << ' ' << fmt(cfg.sensor.sigma_pos)
     << ' ' << fmt(cfg.sensor.sigma_dim) << ' ' << fmt(cfg.sensor.sigma_theta)
     << ' ' << fmt(cfg.sensor.sigma_app) << ' ' << fmt(cfg.sensor.p_miss)
     << ' ' << fmt(cfg.sensor.lambda_fp) << ' ' << fmt(cfg.sensor.r_max) << ' '
     << fmt(cfg.sensor.grid_extent) << ' ' << fmt(cfg.sensor.grid_cell) << ' '
     << cfg.seed;
  const std::string text = os.str();
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

}  // namespace itrack::io
