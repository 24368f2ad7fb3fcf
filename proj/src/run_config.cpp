#include "itrack/cli/run_config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace itrack::cli {

namespace {

using nlohmann::json;

class Section {
 public:
  Section(json j, std::string path) : j_(std::move(j)), path_(std::move(path)) {
    if (!j_.is_object())
      throw ConfigError(path_ + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& target) {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      target = it->get<T>();
    } catch (const json::exception&) {
      throw ConfigError(path_ + "." + key + ": wrong type");
    }
    seen_.insert(key);
  }

  json child(const char* key) {
    auto it = j_.find(key);
    if (it == j_.end()) return json::object();
    seen_.insert(key);
    return *it;
  }

  bool has(const char* key) const { return j_.contains(key); }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key))
        throw ConfigError(path_ + "." + key + ": unknown field");
  }

 private:
  json j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }

  RunConfig cfg;
  Section root(j, "config");
  if (!root.has("seed")) throw ConfigError("config.seed: required");
  root.get("seed", cfg.seed);

  {
    Section w(root.child("world"), "world");
    w.get("num_sequences", cfg.world.num_sequences);
    w.get("frames", cfg.world.frames);
    w.get("min_objects", cfg.world.min_objects);
    w.get("max_objects", cfg.world.max_objects);
    w.get("appearance_dim", cfg.world.appearance_dim);
    w.get("dt", cfg.world.dt);
    w.get("ego_speed", cfg.world.ego_speed);
    w.get("lane_width", cfg.world.lane_width);
    w.get("num_lanes", cfg.world.num_lanes);
    w.get("speed_min", cfg.world.speed_min);
    w.get("speed_max", cfg.world.speed_max);
    w.get("heading_jitter", cfg.world.heading_jitter);
    w.get("phantom_spawn_prob", cfg.world.phantom_spawn_prob);
    w.finish();
  }
  {
    Section s(root.child("sensor"), "sensor");
    auto& sm = cfg.world.sensor;
    s.get("sigma_pos", sm.sigma_pos);
    s.get("sigma_dim", sm.sigma_dim);
    s.get("sigma_theta", sm.sigma_theta);
    s.get("sigma_app", sm.sigma_app);
    s.get("p_miss", sm.p_miss);
    s.get("lambda_fp", sm.lambda_fp);
    s.get("r_max", sm.r_max);
    s.get("grid_extent", sm.grid_extent);
    s.get("grid_cell", sm.grid_cell);
    s.finish();
  }
  {
    Section s(root.child("scm"), "scm");
    s.get("tau_iou", cfg.world.tau_iou);
    s.get("tau_app", cfg.world.tau_app);
    std::string mode = "or";
    s.get("matches_any", mode);
    if (mode == "or")
      cfg.world.matches_any = scm::MatchesAnyMode::Or;
    else if (mode == "appearance_only")
      cfg.world.matches_any = scm::MatchesAnyMode::AppearanceOnly;
    else
      throw ConfigError("scm.matches_any: must be or|appearance_only");
    s.finish();
  }
  {
    Section n(root.child("net"), "net");
    n.get("bbox_feat_dim", cfg.net.bbox_feat_dim);
    n.get("informed_dim", cfg.net.informed_dim);
    n.get("rounds", cfg.net.rounds);
    n.get("horizon", cfg.net.horizon);
    n.get("lstm_hidden", cfg.net.lstm_hidden);
    n.finish();
  }
  {
    Section t(root.child("train"), "train");
    t.get("epochs", cfg.train.epochs);
    t.get("lr", cfg.train.lr);
    t.get("momentum", cfg.train.momentum);
    t.get("margin", cfg.train.margin);
    t.get("lambda_task", cfg.train.lambda_task);
    t.get("lambda_iit", cfg.train.lambda_iit);
    t.get("lambda_probe", cfg.train.lambda_probe);
    t.get("lambda_forecast", cfg.train.lambda_forecast);
    t.get("iit_pairs_per_frame", cfg.train.iit_pairs_per_frame);
    t.get("divergence_limit", cfg.train.divergence_limit);
    t.finish();
  }
  root.finish();

  if (cfg.world.appearance_dim <= 0)
    throw ConfigError("world.appearance_dim: must be positive");
  if (cfg.net.informed_dim % 8 != 0)
    throw ConfigError("net.informed_dim: must be a multiple of 8");
  if (cfg.world.num_sequences <= 0)
    throw ConfigError("world.num_sequences: must be positive");
  if (cfg.world.frames <= 0)
    throw ConfigError("world.frames: must be positive");
  if (cfg.train.epochs < 0)
    throw ConfigError("train.epochs: must be non-negative");

  cfg.world.seed = cfg.seed;
  cfg.net.appearance_dim = cfg.world.appearance_dim;
  cfg.train.net = cfg.net;
  cfg.train.world = cfg.world;
  cfg.train.seed = cfg.seed;
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

}  // namespace itrack::cli
