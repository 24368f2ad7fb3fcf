#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "itrack/cli/run_config.hpp"
#include "itrack/eval/runtime.hpp"
#include "itrack/io/frame_format.hpp"

namespace fs = std::filesystem;
using namespace itrack;

namespace {

struct LookupError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dataset manifests record the appearance width they were generated with;
// evaluating or training with a config that disagrees would silently
// misshape every tensor, so catch it up front.
void check_dataset_compat(const std::string& data_dir,
                          const cli::RunConfig& cfg) {
  std::ifstream mf(fs::path(data_dir) / "manifest.txt");
  if (!mf)
    throw cli::ConfigError("dataset has no manifest: " + data_dir);
  std::string key;
  long long value;
  while (mf >> key >> value)
    if (key == "appearance_dim" && value != cfg.world.appearance_dim)
      throw cli::ConfigError(
          "world.appearance_dim: config says " +
          std::to_string(cfg.world.appearance_dim) + " but dataset " +
          data_dir + " was generated with " + std::to_string(value));
}

int read_epochs_done(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "epochs_done.txt");
  int n = 0;
  if (!(in >> n))
    throw cli::ConfigError("resume directory has no epochs_done.txt: " + dir);
  return n;
}

std::string subject_tag(const eval::SubjectRecord& r) {
  return (r.track_subject ? "trk:" : "det:") + std::to_string(r.subject);
}

std::string record_line(const eval::SubjectRecord& r) {
  std::ostringstream out;
  out << "seq " << r.sequence << " frame " << r.frame << " subject "
      << subject_tag(r) << " decision " << scm::kind_name(r.decision.kind);
  if (r.decision.partner >= 0) out << " partner " << r.decision.partner;
  out << " correct " << (r.correct ? 1 : 0) << " flagged "
      << (eval::uncertainty_flag(r.explanation) ? 1 : 0) << " | "
      << eval::format_explanation(r.explanation);
  return out.str();
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir,
                 bool force) {
  const auto cfg = cli::load_run_config(config_path);
  sim::generate_dataset(cfg.world, out_dir, force);
  std::cout << "wrote " << cfg.world.num_sequences << " sequences to "
            << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, const std::string& resume_dir) {
  auto cfg = cli::load_run_config(config_path);
  check_dataset_compat(data_dir, cfg);
  const auto data = io::read_dataset(data_dir);

  fs::create_directories(out_dir);
  cfg.train.trace_path = (fs::path(out_dir) / "loss_trace.txt").string();

  net::ParamStore init;
  int start_epoch = 0;
  if (!resume_dir.empty()) {
    init = io::load_checkpoint(resume_dir);
    start_epoch = read_epochs_done(resume_dir);
    if (resume_dir != out_dir)
      fs::copy_file(fs::path(resume_dir) / "loss_trace.txt",
                    cfg.train.trace_path,
                    fs::copy_options::overwrite_existing);
  }

  const auto store = iit::train(data, cfg.train, nullptr,
                                resume_dir.empty() ? nullptr : &init,
                                start_epoch);
  io::save_checkpoint(store, out_dir);
  std::ofstream(fs::path(out_dir) / "epochs_done.txt")
      << start_epoch + cfg.train.epochs << "\n";
  std::cout << "trained " << cfg.train.epochs << " epochs, checkpoint in "
            << out_dir << "\n";
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& ckpt_dir,
             const std::string& data_dir, const std::string& out_dir) {
  const auto cfg = cli::load_run_config(config_path);
  check_dataset_compat(data_dir, cfg);
  const auto data = io::read_dataset(data_dir);
  const auto store = io::load_checkpoint(ckpt_dir);

  const auto records = eval::per_subject_records(data, cfg.train, store);

  eval::DecisionMetrics dm =
      eval::decision_accuracy(data, cfg.train, store);
  const auto iia =
      eval::compute_iia(data, cfg.train, store, cfg.train.iit_pairs_per_frame,
                        cfg.seed ^ 0x27220a95fe164667ull);

  eval::UncertaintyStats unc;
  for (const auto& r : records) {
    if (eval::uncertainty_flag(r.explanation)) {
      ++unc.flagged;
      if (!r.correct) ++unc.flagged_errors;
    } else {
      ++unc.unflagged;
      if (!r.correct) ++unc.unflagged_errors;
    }
  }

  int id_switches = 0;
  double ade = 0, fde = 0;
  for (const auto& seq : data) {
    const auto run = eval::run_tracker(seq, cfg.train, store);
    id_switches += run.id_switches;
    ade += run.ade;
    fde += run.fde;
  }
  const double n_seq = double(data.size());

  std::ostringstream rep;
  rep << "subjects " << dm.subjects << "\n";
  rep << "decision_accuracy " << dm.accuracy() << "\n";
  for (const auto& [kind, c] : dm.per_kind)
    rep << "kind " << scm::kind_name(kind) << " tp " << c.tp << " fp " << c.fp
        << " fn " << c.fn << " precision " << c.precision() << " recall "
        << c.recall() << "\n";
  rep << "iia_pairs " << iia.pairs << "\n";
  rep << "iia_overall " << iia.overall() << "\n";
  for (const auto& [kind, ct] : iia.per_kind)
    rep << "iia " << scm::kind_name(kind) << " " << ct.first << "/"
        << ct.second << "\n";
  rep << "id_switches " << id_switches << "\n";
  rep << "ade " << ade / n_seq << "\n";
  rep << "fde " << fde / n_seq << "\n";
  rep << "flag_rate " << unc.flag_rate() << "\n";
  rep << "flagged_error_rate " << unc.flagged_error_rate() << "\n";
  rep << "unflagged_error_rate " << unc.unflagged_error_rate() << "\n";

  std::cout << rep.str();
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream(fs::path(out_dir) / "report.txt") << rep.str();
    std::ofstream subj(fs::path(out_dir) / "subjects.txt");
    for (const auto& r : records) subj << record_line(r) << "\n";
  }
  return 0;
}

int cmd_explain(const std::string& config_path, const std::string& ckpt_dir,
                const std::string& data_dir, int sequence, int frame,
                const std::string& subject) {
  const auto cfg = cli::load_run_config(config_path);
  check_dataset_compat(data_dir, cfg);
  const auto data = io::read_dataset(data_dir);
  const auto store = io::load_checkpoint(ckpt_dir);

  bool track_subject;
  if (subject.rfind("trk:", 0) == 0)
    track_subject = true;
  else if (subject.rfind("det:", 0) == 0)
    track_subject = false;
  else
    throw cli::ConfigError("--subject: expected trk:<id> or det:<index>");
  int id;
  try {
    id = std::stoi(subject.substr(4));
  } catch (const std::exception&) {
    throw cli::ConfigError("--subject: bad index in " + subject);
  }

  if (sequence < 0 || sequence >= int(data.size()))
    throw LookupError("no such sequence: " + std::to_string(sequence));

  // The records of one sequence depend only on that sequence (the LSTM
  // state starts empty at frame 0), so evaluating it alone reproduces the
  // record cmd_eval emits for the same subject.
  iit::Dataset one{data[sequence]};
  for (auto& rec : eval::per_subject_records(one, cfg.train, store)) {
    if (rec.frame != frame || rec.track_subject != track_subject ||
        rec.subject != id)
      continue;
    rec.sequence = sequence;
    std::cout << record_line(rec) << "\n";
    return 0;
  }
  throw LookupError("subject " + subject + " not decided in sequence " +
                    std::to_string(sequence) + " frame " +
                    std::to_string(frame));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"interpretable multi-object tracker"};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "worker cap (commands are sequential)");

  std::string config, data_dir, out_dir, ckpt_dir, resume_dir, subject;
  int sequence = 0, frame = 0;
  bool force = false;

  auto* sim = app.add_subcommand("simulate", "generate a labeled dataset");
  sim->add_option("config", config)->required();
  sim->add_option("--out", out_dir)->required();
  sim->add_flag("--force", force, "overwrite a non-empty output directory");

  auto* trn = app.add_subcommand("train", "train a tracker checkpoint");
  trn->add_option("config", config)->required();
  trn->add_option("--data", data_dir)->required();
  trn->add_option("--out", out_dir)->required();
  trn->add_option("--resume", resume_dir, "checkpoint directory to continue");

  auto* evl = app.add_subcommand("eval", "evaluate a checkpoint");
  evl->add_option("config", config)->required();
  evl->add_option("--checkpoint", ckpt_dir)->required();
  evl->add_option("--data", data_dir)->required();
  evl->add_option("--out", out_dir, "report + per-subject records directory");

  auto* exp = app.add_subcommand("explain", "explain one decision");
  exp->add_option("config", config)->required();
  exp->add_option("--checkpoint", ckpt_dir)->required();
  exp->add_option("--data", data_dir)->required();
  exp->add_option("--sequence", sequence)->required();
  exp->add_option("--frame", frame)->required();
  exp->add_option("--subject", subject, "trk:<id> or det:<index>")->required();

  try {
    app.parse(argc, argv);
    if (sim->parsed()) return cmd_simulate(config, out_dir, force);
    if (trn->parsed()) return cmd_train(config, data_dir, out_dir, resume_dir);
    if (evl->parsed()) return cmd_eval(config, ckpt_dir, data_dir, out_dir);
    if (exp->parsed())
      return cmd_explain(config, ckpt_dir, data_dir, sequence, frame, subject);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const cli::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const LookupError& e) {
    std::cerr << "lookup error: " << e.what() << "\n";
    return 3;
  } catch (const iit::NumericDivergence& e) {
    std::cerr << "numeric divergence: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
