#include "itrack/eval/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "itrack/assign/hungarian.hpp"

namespace itrack::eval {

using assign::AssignedDecision;
using net::Tape;
using net::Var;
using scm::DecisionKind;

namespace {

bool is_pair_kind(DecisionKind k) {
  return k == DecisionKind::AppearanceMatch || k == DecisionKind::BboxMatch;
}

bool decision_correct(const AssignedDecision& got,
                      const assign::SubjectLabel& want) {
  if (got.kind == want.kind)
    return !is_pair_kind(want.kind) || got.partner == want.partner;
  if (is_pair_kind(want.kind) && want.bbox_admissible &&
      is_pair_kind(got.kind) && got.partner == want.partner)
    return true;
  return false;
}

double score_value(const Tape& tape, const net::ScoreSet& s, DecisionKind kind,
                   int index, int detection) {
  switch (kind) {
    case DecisionKind::AppearanceMatch:
      return tape.value(s.s_app)(detection * s.K + index, 0);
    case DecisionKind::BboxMatch:
      return tape.value(s.s_bbox)(detection * s.K + index, 0);
    case DecisionKind::NewbornTrack:
      return tape.value(s.s_newborn)(index, 0);
    case DecisionKind::FalsePositiveDetection:
      return tape.value(s.s_fpdet)(index, 0);
    case DecisionKind::OutOfRangeTrack:
      return tape.value(s.s_oor)(index, 0);
    case DecisionKind::FalsePositiveTrack:
      return tape.value(s.s_fpt)(index, 0);
    case DecisionKind::OccludedTrack:
      return tape.value(s.s_occ)(index, 0);
  }
  return 0.0;
}

// Oracle-driven track sets, LSTM state carried across frames.
void teacher_forced(
    const iit::Dataset& data, const iit::TrainConfig& cfg,
    const net::ParamStore& store,
    const std::function<void(Tape&, const net::TrackerNet&,
                             const net::ParamVars&, const net::FrameView&,
                             const net::ScoreSet&, const sim::FrameRecord&)>&
        fn) {
  const net::TrackerNet netw(cfg.net);
  for (const auto& seq : data) {
    std::map<int, std::pair<Vec, Vec>> state;
    for (const auto& fr : seq) {
      const auto view = iit::make_frame_view(fr, cfg.world, cfg.net, state);
      Tape tape;
      auto params = net::lift_params(tape, store);
      auto scores = netw.forward(tape, params, view);
      fn(tape, netw, params, view, scores, fr);
      for (const auto& l : iit::index_labels(fr)) {
        if (!l.track_subject || !is_pair_kind(l.kind)) continue;
        Var h0 = tape.constant(view.tracks[l.index].hidden.transpose());
        Var c0 = tape.constant(view.tracks[l.index].cell.transpose());
        auto [h1, c1] = netw.lstm_step(
            tape, params, tape.row(scores.det_informed, l.partner), h0, c0);
        state[fr.tracks[l.index].identity] = {
            tape.value(h1).row(0).transpose(),
            tape.value(c1).row(0).transpose()};
      }
    }
  }
}

// The subject's decoded decision, keyed by (track?, index).
std::map<std::pair<bool, int>, AssignedDecision> decode_frame(
    const Tape& tape, const net::ScoreSet& scores) {
  const auto matrix = assign::build_matrix(tape, scores);
  const auto decisions = assign::decode_assignment(
      matrix, assign::solve_assignment(matrix.score));
  std::map<std::pair<bool, int>, AssignedDecision> by_subject;
  for (const auto& d : decisions) by_subject[{d.track_subject, d.index}] = d;
  return by_subject;
}

}  // namespace

DecisionMetrics decision_accuracy(const iit::Dataset& data,
                                  const iit::TrainConfig& cfg,
                                  const net::ParamStore& store) {
  DecisionMetrics m;
  teacher_forced(
      data, cfg, store,
      [&](Tape& tape, const net::TrackerNet&, const net::ParamVars&,
          const net::FrameView&, const net::ScoreSet& scores,
          const sim::FrameRecord& fr) {
        const auto by_subject = decode_frame(tape, scores);
        for (const auto& l : iit::index_labels(fr)) {
          ++m.subjects;
          auto it = by_subject.find({l.track_subject, l.index});
          const bool ok =
              it != by_subject.end() && decision_correct(it->second, l);
          if (ok) {
            ++m.correct;
            ++m.per_kind[l.kind].tp;
          } else {
            ++m.per_kind[l.kind].fn;
            if (it != by_subject.end()) ++m.per_kind[it->second.kind].fp;
          }
        }
      });
  return m;
}

IiaReport compute_iia(const iit::Dataset& data, const iit::TrainConfig& cfg,
                      const net::ParamStore& store, int pairs_per_frame,
                      uint64_t seed) {
  IiaReport report;
  std::mt19937_64 rng(seed);
  teacher_forced(
      data, cfg, store,
      [&](Tape& tape, const net::TrackerNet& netw, const net::ParamVars& params,
          const net::FrameView& view, const net::ScoreSet& scores,
          const sim::FrameRecord& fr) {
        const int K = scores.K, D = scores.D;
        for (const auto& p :
             iit::sample_pairs(K, D, pairs_per_frame, rng)) {
          const bool truth = iit::counterfactual_label(fr, cfg.world, p);
          Var s = iit::interchange_score(tape, netw, params, view, scores, p);
          const bool predicted = tape.scalar(s) > 0.0;
          ++report.pairs;
          auto& [good, total] = report.per_kind[p.kind];
          ++total;
          if (predicted == truth) {
            ++report.correct;
            ++good;
          }
        }
      });
  return report;
}

Explanation explain_subject(const Tape& tape, const net::TrackerNet& netw,
                            const net::ParamStore& store,
                            const net::ScoreSet& scores, DecisionKind kind,
                            int index, int detection,
                            scm::MatchesAnyMode mode) {
  Explanation e;
  e.kind = kind;
  e.score = score_value(tape, scores, kind, index, detection);

  const auto align = iit::default_alignment(kind, netw.config().informed_dim);
  const int row = iit::subject_row(kind, index, detection, scores.K);
  scm::ProbedBooleans b;
  for (const std::string& node : iit::probed_nodes(kind)) {
    const std::string base =
        "probe." + std::string(net::head_tag(kind)) + "." + node;
    if (!store.has(base + ".w")) {
      e.probes_available = false;
      e.nodes.clear();
      return e;
    }
    const iit::Slice& s = align.node_slice.at(node);
    const Mat act =
        tape.value(scores.cache.at(s.slot)).block(row, s.col, 1, s.width);
    const double logit =
        (act * store.value(base + ".w"))(0, 0) + store.value(base + ".b")(0, 0);
    const bool value = logit > 0.0;
    e.nodes[node] = value;
    if (node == "is_occluded") b.is_occluded = value;
    else if (node == "is_out_of_range") b.is_out_of_range = value;
    else if (node == "matches_appearance") b.matches_appearance = value;
    else if (node == "matches_bbox") b.matches_bbox = value;
    else if (node == "is_valid_detection") b.is_valid_detection = value;
    else if (node == "matches_any_track") b.matches_any_track = value;
    else if (node == "matches_this_detection") b.matches_this_detection = value;
  }
  e.decision = scm::redecide(kind, b, mode);
  e.agrees = (e.score > 0.0) == e.decision;
  return e;
}

std::string format_explanation(const Explanation& e) {
  std::ostringstream out;
  out << scm::kind_name(e.kind) << " score=" << e.score;
  if (!e.probes_available) {
    out << " probes=unavailable";
    return out.str();
  }
  for (const auto& [node, value] : e.nodes)
    out << ' ' << node << '=' << (value ? "true" : "false");
  out << " reconstructed=" << (e.decision ? "true" : "false");
  out << " agreement=" << (e.agrees ? "yes" : "NO");
  return out.str();
}

std::vector<SubjectRecord> per_subject_records(const iit::Dataset& data,
                                               const iit::TrainConfig& cfg,
                                               const net::ParamStore& store) {
  std::vector<SubjectRecord> records;
  const net::TrackerNet netw(cfg.net);
  for (size_t si = 0; si < data.size(); ++si) {
    std::map<int, std::pair<Vec, Vec>> state;
    for (const auto& fr : data[si]) {
      const auto view = iit::make_frame_view(fr, cfg.world, cfg.net, state);
      Tape tape;
      auto params = net::lift_params(tape, store);
      auto scores = netw.forward(tape, params, view);
      const auto by_subject = decode_frame(tape, scores);
      const auto labels = iit::index_labels(fr);
      for (const auto& l : labels) {
        auto it = by_subject.find({l.track_subject, l.index});
        if (it == by_subject.end()) continue;
        const AssignedDecision& got = it->second;
        const int track = is_pair_kind(got.kind)
                              ? (got.track_subject ? got.index : got.partner)
                              : got.index;
        const int det = is_pair_kind(got.kind)
                            ? (got.track_subject ? got.partner : got.index)
                            : -1;
        SubjectRecord rec;
        rec.sequence = static_cast<int>(si);
        rec.frame = fr.t;
        rec.track_subject = l.track_subject;
        rec.subject =
            l.track_subject ? fr.tracks[l.index].identity : l.index;
        rec.decision = got;
        rec.explanation =
            explain_subject(tape, netw, store, scores, got.kind,
                            is_pair_kind(got.kind) ? track : got.index, det,
                            cfg.world.matches_any);
        rec.correct = decision_correct(got, l);
        records.push_back(std::move(rec));
      }
      for (const auto& l : labels) {
        if (!l.track_subject || !is_pair_kind(l.kind)) continue;
        Var h0 = tape.constant(view.tracks[l.index].hidden.transpose());
        Var c0 = tape.constant(view.tracks[l.index].cell.transpose());
        auto [h1, c1] = netw.lstm_step(
            tape, params, tape.row(scores.det_informed, l.partner), h0, c0);
        state[fr.tracks[l.index].identity] = {
            tape.value(h1).row(0).transpose(),
            tape.value(c1).row(0).transpose()};
      }
    }
  }
  return records;
}

UncertaintyStats uncertainty_eval(const iit::Dataset& data,
                                  const iit::TrainConfig& cfg,
                                  const net::ParamStore& store) {
  UncertaintyStats stats;
  for (const auto& rec : per_subject_records(data, cfg, store)) {
    if (uncertainty_flag(rec.explanation)) {
      ++stats.flagged;
      if (!rec.correct) ++stats.flagged_errors;
    } else {
      ++stats.unflagged;
      if (!rec.correct) ++stats.unflagged_errors;
    }
  }
  return stats;
}

double binomial_upper_pvalue(int n, int k, double p) {
  if (k <= 0) return 1.0;
  if (p <= 0.0) return k > 0 ? 0.0 : 1.0;
  if (p >= 1.0) return 1.0;
  // sum_{i=k}^{n} C(n,i) p^i (1-p)^(n-i), accumulated in log space
  double total = 0.0;
  for (int i = k; i <= n; ++i) {
    const double lg = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) -
                      std::lgamma(n - i + 1.0) + i * std::log(p) +
                      (n - i) * std::log1p(-p);
    total += std::exp(lg);
  }
  return std::min(total, 1.0);
}

TrackerRun run_tracker(const iit::Sequence& seq, const iit::TrainConfig& cfg,
                       const net::ParamStore& store,
                       const TrackerOptions& opt) {
  struct LiveTrack {
    int id = 0;
    OrientedBox box;  // world frame at T-1
    Vec appearance;
    Vec hidden, cell;
    int occluded = 0;
  };

  const net::TrackerNet netw(cfg.net);
  const int G = cfg.net.lstm_hidden;
  const int horizon = cfg.net.horizon;
  TrackerRun run;
  std::vector<LiveTrack> tracks;
  int next_id = 0;
  std::map<int, int> claimed_by;  // ground-truth identity -> last track id
  double ade_sum = 0, fde_sum = 0;
  int ade_terms = 0, fde_terms = 0;

  for (size_t t = 0; t < seq.size(); ++t) {
    const sim::FrameRecord& fr = seq[t];
    net::FrameView view;
    view.ego = fr.ego;
    view.grid = fr.grid;
    view.dt = cfg.world.dt;
    view.r_max = cfg.world.sensor.r_max;
    view.tau_iou = cfg.world.tau_iou;
    view.tau_app = cfg.world.tau_app;
    for (const auto& trk : tracks)
      view.tracks.push_back({trk.box, trk.appearance, trk.hidden, trk.cell});
    for (const auto& d : fr.detections)
      view.detections.push_back({d.box, d.score, d.appearance});

    Tape tape;
    auto params = net::lift_params(tape, store);
    auto scores = netw.forward(tape, params, view);
    const auto matrix = assign::build_matrix(tape, scores);
    const auto decisions = assign::decode_assignment(
        matrix, assign::solve_assignment(matrix.score));

    FrameOutput out;
    out.t = fr.t;
    for (const auto& trk : tracks) out.entering_ids.push_back(trk.id);
    out.decisions = decisions;

    std::vector<LiveTrack> next;
    for (const auto& d : decisions) {
      if (opt.with_explanations) {
        const int track = is_pair_kind(d.kind)
                              ? (d.track_subject ? d.index : d.partner)
                              : d.index;
        const int det = is_pair_kind(d.kind)
                            ? (d.track_subject ? d.partner : d.index)
                            : -1;
        out.explanations.push_back(
            explain_subject(tape, netw, store, scores, d.kind,
                            is_pair_kind(d.kind) ? track : d.index, det,
                            cfg.world.matches_any));
      }
      if (d.track_subject && is_pair_kind(d.kind)) {
        LiveTrack trk = tracks[d.index];
        const auto& det = fr.detections[d.partner];
        const Eigen::Vector2d center =
            to_world_frame(det.box.x, det.box.y, fr.ego.pose);
        const double ct = std::cos(fr.ego.pose.heading);
        const double st = std::sin(fr.ego.pose.heading);
        trk.box = det.box;
        trk.box.x = center.x();
        trk.box.y = center.y();
        trk.box.theta = wrap_angle(det.box.theta + fr.ego.pose.heading);
        trk.box.vx = ct * det.box.vx - st * det.box.vy;
        trk.box.vy = st * det.box.vx + ct * det.box.vy;
        trk.appearance = det.appearance;
        trk.occluded = 0;

        Var h0 = tape.constant(trk.hidden.size() == G
                                   ? trk.hidden.transpose().eval()
                                   : Mat::Zero(1, G));
        Var c0 = tape.constant(trk.cell.size() == G
                                   ? trk.cell.transpose().eval()
                                   : Mat::Zero(1, G));
        auto [h1, c1] = netw.lstm_step(
            tape, params, tape.row(scores.det_informed, d.partner), h0, c0);
        trk.hidden = tape.value(h1).row(0).transpose();
        trk.cell = tape.value(c1).row(0).transpose();

        const int gt = fr.association[d.partner];
        if (gt >= 0) {
          auto it = claimed_by.find(gt);
          if (it != claimed_by.end() && it->second != trk.id)
            ++run.id_switches;
          claimed_by[gt] = trk.id;

          // Forecast error against the object's future path.
          if (t + horizon < seq.size()) {
            const Mat off = tape.value(
                netw.forecast_offsets(tape, params, h1));
            double x = trk.box.x, y = trk.box.y;
            bool complete = true;
            double err_last = 0.0, err_sum = 0.0;
            for (int i = 0; i < horizon && complete; ++i) {
              x += off(0, 3 * i);
              y += off(0, 3 * i + 1);
              const auto& objs = seq[t + 1 + i].objects;
              auto oit = std::find_if(
                  objs.begin(), objs.end(),
                  [&](const auto& o) { return o.identity == gt; });
              if (oit == objs.end()) {
                complete = false;
                break;
              }
              err_last = std::hypot(x - oit->pose.x, y - oit->pose.y);
              err_sum += err_last;
            }
            if (complete) {
              ade_sum += err_sum / horizon;
              ++ade_terms;
              fde_sum += err_last;
              ++fde_terms;
            }
          }
        }
        next.push_back(std::move(trk));
      } else if (d.track_subject && d.kind == DecisionKind::OccludedTrack) {
        LiveTrack trk = tracks[d.index];
        ++trk.occluded;
        if (trk.occluded > opt.occluded_persistence) continue;
        trk.box.x += trk.box.vx * cfg.world.dt;
        trk.box.y += trk.box.vy * cfg.world.dt;
        next.push_back(std::move(trk));
      } else if (!d.track_subject && d.kind == DecisionKind::NewbornTrack) {
        LiveTrack trk;
        trk.id = next_id++;
        const auto& det = fr.detections[d.index];
        const Eigen::Vector2d center =
            to_world_frame(det.box.x, det.box.y, fr.ego.pose);
        const double ct = std::cos(fr.ego.pose.heading);
        const double st = std::sin(fr.ego.pose.heading);
        trk.box = det.box;
        trk.box.x = center.x();
        trk.box.y = center.y();
        trk.box.theta = wrap_angle(det.box.theta + fr.ego.pose.heading);
        trk.box.vx = ct * det.box.vx - st * det.box.vy;
        trk.box.vy = st * det.box.vx + ct * det.box.vy;
        trk.appearance = det.appearance;
        trk.hidden = Vec::Zero(G);
        trk.cell = Vec::Zero(G);
        const int gt = fr.association[d.index];
        if (gt >= 0) {
          auto it = claimed_by.find(gt);
          if (it != claimed_by.end() && it->second != trk.id)
            ++run.id_switches;
          claimed_by[gt] = trk.id;
        }
        next.push_back(std::move(trk));
      }
      // OutOfRangeTrack / FalsePositiveTrack retire the track;
      // FalsePositiveDetection drops the detection.
    }

    tracks = std::move(next);
    for (const auto& trk : tracks)
      out.tracks.push_back({trk.id, trk.box, trk.occluded > 0});
    run.frames.push_back(std::move(out));
  }
  if (ade_terms > 0) run.ade = ade_sum / ade_terms;
  if (fde_terms > 0) run.fde = fde_sum / fde_terms;
  return run;
}

}  // namespace itrack::eval
