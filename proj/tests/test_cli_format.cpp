#include <random>

#include "doctest.h"
#include "itrack/cli/run_config.hpp"
#include "itrack/io/frame_format.hpp"
#include "itrack/sim/world.hpp"

using namespace itrack;

namespace {

sim::FrameRecord random_frame(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-50, 50);
  std::normal_distribution<double> gauss;
  std::uniform_int_distribution<int> count(0, 4);

  sim::FrameRecord f;
  f.t = count(rng);
  f.ego.pose = {u(rng), u(rng), wrap_angle(u(rng) / 20)};
  f.ego.vx = u(rng) / 10;
  f.ego.vy = u(rng) / 10;

  const int nobj = count(rng);
  for (int i = 0; i < nobj; ++i) {
    sim::ObjectState o;
    o.identity = i;
    o.pose = {u(rng), u(rng), wrap_angle(u(rng) / 20)};
    o.vx = gauss(rng);
    o.vy = gauss(rng);
    o.embedding = Vec(5);
    for (int j = 0; j < 5; ++j) o.embedding[j] = gauss(rng);
    o.embedding.normalize();
    f.objects.push_back(std::move(o));
  }

  const int ndet = count(rng);
  for (int i = 0; i < ndet; ++i) {
    sim::Detection d;
    d.box = {u(rng), u(rng), 0.9, 1.5, 4.0, 2.0, gauss(rng), gauss(rng),
             wrap_angle(u(rng) / 20)};
    d.score = 0.5;
    d.appearance = Vec(5);
    for (int j = 0; j < 5; ++j) d.appearance[j] = gauss(rng);
    f.detections.push_back(std::move(d));
    f.association.push_back(i % 2 == 0 ? i : -1);
  }

  f.grid.origin = {-10, -10, 0};
  f.grid.cell_size = 2.0;
  f.grid.width = 10;
  f.grid.height = 10;
  f.grid.mask.assign(100, 0);
  std::bernoulli_distribution coin(0.3);
  for (auto& c : f.grid.mask) c = coin(rng) ? 1 : 0;

  const int ntrk = count(rng);
  for (int i = 0; i < ntrk; ++i) {
    sim::OracleTrack tr;
    tr.identity = coin(rng) ? -2 - i : i;
    tr.phantom = tr.identity < 0;
    tr.box_prev = {u(rng), u(rng), 0.9, 1.5, 4.5, 2.0, gauss(rng), gauss(rng), 0.1};
    tr.appearance = Vec::Ones(5).normalized();
    f.tracks.push_back(std::move(tr));

    sim::DecisionLabel lbl;
    lbl.track_subject = true;
    lbl.subject = f.tracks.back().identity;
    lbl.kind = scm::kAllDecisionKinds[i % 7];
    const bool pair = lbl.kind == scm::DecisionKind::AppearanceMatch ||
                      lbl.kind == scm::DecisionKind::BboxMatch;
    lbl.partner = pair ? 0 : -1;
    lbl.bbox_admissible = pair && coin(rng);
    f.labels.push_back(lbl);
  }
  return f;
}

bool frames_equal(const sim::FrameRecord& a, const sim::FrameRecord& b) {
  if (a.t != b.t || !(a.ego == b.ego) || a.grid != b.grid ||
      a.association != b.association || a.labels != b.labels)
    return false;
  if (a.objects.size() != b.objects.size() ||
      a.detections.size() != b.detections.size() ||
      a.tracks.size() != b.tracks.size())
    return false;
  for (size_t i = 0; i < a.objects.size(); ++i) {
    const auto& x = a.objects[i];
    const auto& y = b.objects[i];
    if (x.identity != y.identity || !(x.pose == y.pose) || x.vx != y.vx ||
        x.vy != y.vy || x.embedding != y.embedding)
      return false;
  }
  for (size_t i = 0; i < a.detections.size(); ++i) {
    if (!(a.detections[i].box == b.detections[i].box) ||
        a.detections[i].score != b.detections[i].score ||
        a.detections[i].appearance != b.detections[i].appearance)
      return false;
  }
  for (size_t i = 0; i < a.tracks.size(); ++i) {
    if (a.tracks[i].identity != b.tracks[i].identity ||
        a.tracks[i].phantom != b.tracks[i].phantom ||
        !(a.tracks[i].box_prev == b.tracks[i].box_prev) ||
        a.tracks[i].appearance != b.tracks[i].appearance)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("frame format round-trips 1000 random frames exactly") {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 1000; ++i) {
    const sim::FrameRecord f = random_frame(rng);
    const std::string line = io::serialize_frame(f);
    const sim::FrameRecord g = io::parse_frame(line);
    REQUIRE(frames_equal(f, g));
    CHECK(io::serialize_frame(g) == line);
  }
}

TEST_CASE("base64 round-trip") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> byte(0, 255), len(0, 40);
  for (int i = 0; i < 200; ++i) {
    std::vector<uint8_t> data(len(rng));
    for (auto& b : data) b = static_cast<uint8_t>(byte(rng));
    CHECK(io::base64_decode(io::base64_encode(data)) == data);
  }
}

TEST_CASE("malformed frame lines are rejected") {
  CHECK_THROWS(io::parse_frame(""));
  CHECK_THROWS(io::parse_frame("T 1 EGO 0 0 0 0"));
  CHECK_THROWS(io::parse_frame("BOGUS"));
}

TEST_CASE("run config parses and propagates into the train config") {
  const auto cfg = cli::parse_run_config(R"({
    "seed": 42,
    "world": {"num_sequences": 5, "frames": 12, "appearance_dim": 6},
    "scm": {"tau_iou": 0.4, "matches_any": "appearance_only"},
    "net": {"informed_dim": 24},
    "train": {"epochs": 3, "lr": 0.001, "lambda_iit": 0.0}
  })");
  CHECK(cfg.seed == 42);
  CHECK(cfg.world.num_sequences == 5);
  CHECK(cfg.world.frames == 12);
  CHECK(cfg.world.tau_iou == doctest::Approx(0.4));
  CHECK(cfg.world.matches_any == scm::MatchesAnyMode::AppearanceOnly);
  CHECK(cfg.net.informed_dim == 24);
  CHECK(cfg.net.appearance_dim == 6);
  CHECK(cfg.train.epochs == 3);
  CHECK(cfg.train.lambda_iit == 0.0);
  CHECK(cfg.train.seed == 42);
  CHECK(cfg.train.world.seed == 42);
  CHECK(cfg.train.net.informed_dim == 24);
}

TEST_CASE("run config errors name the offending field") {
  auto message = [](const std::string& text) {
    try {
      cli::parse_run_config(text);
    } catch (const cli::ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(message(R"({"world": {}})") == "config.seed: required");
  CHECK(message(R"({"seed": 1, "world": {"frames": "ten"}})") ==
        "world.frames: wrong type");
  CHECK(message(R"({"seed": 1, "world": {"framez": 10}})") ==
        "world.framez: unknown field");
  CHECK(message(R"({"seed": 1, "bogus": 1})") == "config.bogus: unknown field");
  CHECK(message(R"({"seed": 1, "scm": {"matches_any": "xor"}})") ==
        "scm.matches_any: must be or|appearance_only");
  CHECK(message(R"({"seed": 1, "net": {"informed_dim": 12}})") ==
        "net.informed_dim: must be a multiple of 8");
  CHECK(message("{nope").rfind("config is not valid JSON", 0) == 0);
}
