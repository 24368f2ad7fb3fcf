#include "itrack/iit/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace itrack::iit {

using net::Tape;
using net::Var;
using scm::DecisionKind;

namespace {

scm::ScmInputs subject_inputs(const sim::FrameRecord& frame,
                              const sim::WorldConfig& world,
                              DecisionKind kind, int index, int detection) {
  switch (kind) {
    case DecisionKind::NewbornTrack:
    case DecisionKind::FalsePositiveDetection:
      return sim::detection_inputs(frame, index, world);
    case DecisionKind::AppearanceMatch:
    case DecisionKind::BboxMatch: {
      scm::ScmInputs in = sim::track_inputs(frame, frame.tracks[index], world);
      in.candidate_detection_index = detection;
      return in;
    }
    default:
      return sim::track_inputs(frame, frame.tracks[index], world);
  }
}

Var score_of(Tape& tape, const net::ScoreSet& s, DecisionKind kind, int index,
             int detection) {
  switch (kind) {
    case DecisionKind::AppearanceMatch:
      return tape.row(s.s_app, detection * s.K + index);
    case DecisionKind::BboxMatch:
      return tape.row(s.s_bbox, detection * s.K + index);
    case DecisionKind::NewbornTrack:
      return tape.row(s.s_newborn, index);
    case DecisionKind::FalsePositiveDetection:
      return tape.row(s.s_fpdet, index);
    case DecisionKind::OutOfRangeTrack:
      return tape.row(s.s_oor, index);
    case DecisionKind::FalsePositiveTrack:
      return tape.row(s.s_fpt, index);
    case DecisionKind::OccludedTrack:
      return tape.row(s.s_occ, index);
  }
  throw std::logic_error("bad decision kind");
}

// max(0, margin - y*score) for y in {-1, +1}
Var hinge(Tape& tape, Var score, bool positive, double margin) {
  return tape.relu(tape.affine(score, positive ? -1.0 : 1.0, margin));
}

}  // namespace

bool counterfactual_label(const sim::FrameRecord& frame,
                          const sim::WorldConfig& world,
                          const InterchangePair& pair) {
  const scm::CausalGraph g = scm::build_scm(pair.kind, world.matches_any);
  const auto base = scm::to_assignment(
      pair.kind,
      subject_inputs(frame, world, pair.kind, pair.base_index, pair.detection));
  const auto source = scm::to_assignment(
      pair.kind, subject_inputs(frame, world, pair.kind, pair.source_index,
                                pair.detection));
  return g.interchange(base, source, {intervened_node(pair.kind)}).as_bool();
}

Var interchange_score(Tape& tape, const net::TrackerNet& netw,
                      const net::ParamVars& params, const net::FrameView& frame,
                      const net::ScoreSet& clean, const InterchangePair& pair) {
  const auto align =
      default_alignment(pair.kind, netw.config().informed_dim);
  const Slice& s = align.node_slice.at(intervened_node(pair.kind));
  const int base_row =
      subject_row(pair.kind, pair.base_index, pair.detection, clean.K);
  const int src_row =
      subject_row(pair.kind, pair.source_index, pair.detection, clean.K);
  Var patch = tape.slice_cols(tape.row(clean.cache.at(s.slot), src_row), s.col,
                              s.width);
  net::ScoreSet patched =
      netw.forward(tape, params, frame, {{s.slot, base_row, s.col, patch}});
  return score_of(tape, patched, pair.kind, pair.base_index, pair.detection);
}

std::vector<InterchangePair> sample_pairs(int num_tracks, int num_detections,
                                          int count, std::mt19937_64& rng) {
  std::vector<DecisionKind> feasible;
  for (DecisionKind k : scm::kAllDecisionKinds) {
    switch (k) {
      case DecisionKind::AppearanceMatch:
      case DecisionKind::BboxMatch:
        if (num_tracks >= 2 && num_detections >= 1) feasible.push_back(k);
        break;
      case DecisionKind::NewbornTrack:
      case DecisionKind::FalsePositiveDetection:
        if (num_detections >= 2) feasible.push_back(k);
        break;
      default:
        if (num_tracks >= 2) feasible.push_back(k);
    }
  }
  std::vector<InterchangePair> out;
  if (feasible.empty()) return out;
  std::uniform_int_distribution<size_t> pick_kind(0, feasible.size() - 1);
  auto two_distinct = [&](int n) {
    std::uniform_int_distribution<int> u(0, n - 1), v(0, n - 2);
    const int a = u(rng);
    int b = v(rng);
    if (b >= a) ++b;
    return std::pair<int, int>{a, b};
  };
  for (int i = 0; i < count; ++i) {
    InterchangePair p;
    p.kind = feasible[pick_kind(rng)];
    switch (p.kind) {
      case DecisionKind::AppearanceMatch:
      case DecisionKind::BboxMatch: {
        std::uniform_int_distribution<int> ud(0, num_detections - 1);
        p.detection = ud(rng);
        std::tie(p.base_index, p.source_index) = two_distinct(num_tracks);
        break;
      }
      case DecisionKind::NewbornTrack:
      case DecisionKind::FalsePositiveDetection:
        std::tie(p.base_index, p.source_index) = two_distinct(num_detections);
        break;
      default:
        std::tie(p.base_index, p.source_index) = two_distinct(num_tracks);
    }
    out.push_back(p);
  }
  return out;
}

net::FrameView make_frame_view(
    const sim::FrameRecord& frame, const sim::WorldConfig& world,
    const net::NetConfig& cfg,
    const std::map<int, std::pair<Vec, Vec>>& lstm_state) {
  net::FrameView view;
  view.ego = frame.ego;
  view.grid = frame.grid;
  view.dt = world.dt;
  view.r_max = world.sensor.r_max;
  view.tau_iou = world.tau_iou;
  view.tau_app = world.tau_app;
  for (const auto& t : frame.tracks) {
    net::TrackView tv;
    tv.box_prev = t.box_prev;
    tv.appearance = t.appearance;
    auto it = lstm_state.find(t.identity);
    tv.hidden = it != lstm_state.end() ? it->second.first
                                       : Vec::Zero(cfg.lstm_hidden);
    tv.cell = it != lstm_state.end() ? it->second.second
                                     : Vec::Zero(cfg.lstm_hidden);
    view.tracks.push_back(std::move(tv));
  }
  for (const auto& d : frame.detections)
    view.detections.push_back({d.box, d.score, d.appearance});
  return view;
}

std::vector<assign::SubjectLabel> index_labels(const sim::FrameRecord& frame) {
  std::map<int, int> track_index;
  for (size_t k = 0; k < frame.tracks.size(); ++k)
    track_index[frame.tracks[k].identity] = static_cast<int>(k);
  std::vector<assign::SubjectLabel> out;
  for (const auto& l : frame.labels) {
    assign::SubjectLabel s;
    s.track_subject = l.track_subject;
    s.index = l.track_subject ? track_index.at(l.subject) : l.subject;
    s.kind = l.kind;
    s.bbox_admissible = l.bbox_admissible;
    const bool pair = l.kind == DecisionKind::AppearanceMatch ||
                      l.kind == DecisionKind::BboxMatch;
    if (pair)
      s.partner = l.track_subject ? l.partner : track_index.at(l.partner);
    out.push_back(s);
  }
  return out;
}

scm::ProbedBooleans probe_targets_track(const sim::FrameRecord& frame,
                                        int track_index,
                                        const sim::WorldConfig& world) {
  const scm::ScmInputs in =
      sim::track_inputs(frame, frame.tracks[track_index], world);
  const OrientedBox pred =
      scm::predicted_bbox_at_t(in.forecast, in.box_prev, in.ego);
  scm::ProbedBooleans b;
  b.is_occluded = scm::is_occluded(pred, in.grid);
  b.is_out_of_range = scm::is_out_of_range(pred, in.r_max);
  b.matches_appearance =
      scm::matches_appearance(in.track_appearance, in.detection_appearances,
                              in.oracle_available, in.oracle_match_index,
                              in.tau_app)
          .has_value();
  b.matches_bbox =
      scm::matches_bbox(pred, in.detection_boxes, in.tau_iou).has_value();
  return b;
}

scm::ProbedBooleans probe_targets_detection(const sim::FrameRecord& frame,
                                            int det_index,
                                            const sim::WorldConfig& world) {
  const scm::ScmInputs in = sim::detection_inputs(frame, det_index, world);
  scm::ProbedBooleans b;
  b.is_valid_detection = in.appearance_valid || in.bbox_valid;
  b.matches_any_track = in.matches_any_track;
  return b;
}

std::pair<bool, bool> probe_targets_pair(const sim::FrameRecord& frame,
                                         int track_index, int det_index,
                                         const sim::WorldConfig& world) {
  const scm::ScmInputs in =
      sim::track_inputs(frame, frame.tracks[track_index], world);
  const auto app = scm::matches_appearance(
      in.track_appearance, in.detection_appearances, in.oracle_available,
      in.oracle_match_index, in.tau_app);
  const OrientedBox pred =
      scm::predicted_bbox_at_t(in.forecast, in.box_prev, in.ego);
  const auto bbox = scm::matches_bbox(pred, in.detection_boxes, in.tau_iou);
  return {app == std::optional<int>(det_index),
          bbox == std::optional<int>(det_index)};
}

void init_probe_params(net::ParamStore& store, const net::NetConfig& cfg) {
  for (DecisionKind kind : scm::kAllDecisionKinds) {
    const auto align = default_alignment(kind, cfg.informed_dim);
    for (const std::string& node : probed_nodes(kind)) {
      const std::string base =
          "probe." + std::string(net::head_tag(kind)) + "." + node;
      if (store.has(base + ".w")) continue;
      store.create_zero(base + ".w", align.node_slice.at(node).width, 1);
      store.create_zero(base + ".b", 1, 1);
    }
  }
}

net::Var probe_loss(Tape& tape, const net::TrackerNet& netw,
                    const net::ParamVars& params, const net::ScoreSet& scores,
                    const sim::FrameRecord& frame,
                    const sim::WorldConfig& world) {
  const int K = scores.K, D = scores.D;
  Var total = tape.constant(Mat::Zero(1, 1));
  int terms = 0;

  auto readout = [&](DecisionKind kind, const std::string& node, int row,
                     bool target) {
    const auto align = default_alignment(kind, netw.config().informed_dim);
    const Slice& s = align.node_slice.at(node);
    const std::string base =
        "probe." + std::string(net::head_tag(kind)) + "." + node;
    Var act = tape.stop_gradient(tape.slice_cols(
        tape.row(scores.cache.at(s.slot), row), s.col, s.width));
    Var logit =
        tape.add(tape.matmul(act, params.at(base + ".w")), params.at(base + ".b"));
    total = tape.add(total, hinge(tape, logit, target, 1.0));
    ++terms;
  };

  for (int k = 0; k < K; ++k) {
    const auto b = probe_targets_track(frame, k, world);
    for (DecisionKind kind : {DecisionKind::OccludedTrack,
                              DecisionKind::OutOfRangeTrack,
                              DecisionKind::FalsePositiveTrack}) {
      for (const std::string& node : probed_nodes(kind)) {
        bool target = false;
        if (node == "is_occluded") target = b.is_occluded;
        else if (node == "is_out_of_range") target = b.is_out_of_range;
        else if (node == "matches_appearance") target = b.matches_appearance;
        else target = b.matches_bbox;
        readout(kind, node, k, target);
      }
    }
  }
  for (int d = 0; d < D; ++d) {
    const auto b = probe_targets_detection(frame, d, world);
    readout(DecisionKind::NewbornTrack, "is_valid_detection", d,
            b.is_valid_detection);
    readout(DecisionKind::NewbornTrack, "matches_any_track", d,
            b.matches_any_track);
    readout(DecisionKind::FalsePositiveDetection, "is_valid_detection", d,
            b.is_valid_detection);
  }
  for (int d = 0; d < D; ++d)
    for (int k = 0; k < K; ++k) {
      const auto [app, bbox] = probe_targets_pair(frame, k, d, world);
      readout(DecisionKind::AppearanceMatch, "matches_this_detection",
              d * K + k, app);
      readout(DecisionKind::BboxMatch, "matches_this_detection", d * K + k,
              bbox);
    }
  if (terms == 0) return total;
  return tape.scale(total, 1.0 / terms);
}

net::ParamStore train(const Dataset& data, const TrainConfig& cfg,
                      std::vector<EpochStats>* trace,
                      const net::ParamStore* init, int start_epoch) {
  const net::TrackerNet netw(cfg.net);
  net::ParamStore store;
  if (init) {
    store = *init;
  } else {
    netw.init_params(store, cfg.seed ^ 0x9e3779b97f4a7c15ull);
  }
  init_probe_params(store, cfg.net);

  std::mt19937_64 rng_order(cfg.seed ^ 0xc2b2ae3d27d4eb4full);
  std::mt19937_64 rng_pairs(cfg.seed ^ 0x165667b19e3779f9ull);

  std::ofstream trace_file;
  if (!cfg.trace_path.empty()) {
    trace_file.open(cfg.trace_path,
                    start_epoch > 0 ? std::ios::app : std::ios::out);
    if (start_epoch == 0) trace_file << "epoch task iit probe forecast total\n";
  }

  const int horizon = cfg.net.horizon;
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng_order);
    EpochStats st;
    for (size_t si : order) {
      const Sequence& seq = data[si];
      std::map<int, std::pair<Vec, Vec>> lstm_state;
      for (size_t t = 0; t < seq.size(); ++t) {
        const sim::FrameRecord& fr = seq[t];
        const net::FrameView view =
            make_frame_view(fr, cfg.world, cfg.net, lstm_state);
        const int K = static_cast<int>(view.tracks.size());
        const int D = static_cast<int>(view.detections.size());

        Tape tape;
        auto params = net::lift_params(tape, store);
        net::ScoreSet scores = netw.forward(tape, params, view);
        const auto labels = index_labels(fr);

        Var task = assign::margin_loss(tape, scores, labels, cfg.margin);
        Var total = tape.scale(task, cfg.lambda_task);

        Var iit = tape.constant(Mat::Zero(1, 1));
        if (cfg.lambda_iit != 0.0 && cfg.iit_pairs_per_frame > 0) {
          const auto pairs =
              sample_pairs(K, D, cfg.iit_pairs_per_frame, rng_pairs);
          for (const auto& p : pairs) {
            const bool y = counterfactual_label(fr, cfg.world, p);
            Var s = interchange_score(tape, netw, params, view, scores, p);
            iit = tape.add(iit, hinge(tape, s, y, cfg.margin));
          }
          if (!pairs.empty()) {
            iit = tape.scale(iit, 1.0 / static_cast<double>(pairs.size()));
            total = tape.add(total, tape.scale(iit, cfg.lambda_iit));
          }
        }

        Var probe = tape.constant(Mat::Zero(1, 1));
        if (cfg.lambda_probe != 0.0) {
          probe = probe_loss(tape, netw, params, scores, fr, cfg.world);
          total = tape.add(total, tape.scale(probe, cfg.lambda_probe));
        }

        // Matched tracks take an LSTM step on their detection's informed
        // features; the updated hidden state drives the forecaster.
        std::map<int, int> matched;  // track index -> detection index
        for (const auto& l : labels)
          if (l.track_subject && (l.kind == DecisionKind::AppearanceMatch ||
                                  l.kind == DecisionKind::BboxMatch))
            matched[l.index] = l.partner;

        Var fc = tape.constant(Mat::Zero(1, 1));
        int fc_terms = 0;
        std::vector<std::pair<int, std::pair<Var, Var>>> new_states;
        for (const auto& [k, d] : matched) {
          const int id = fr.tracks[k].identity;
          Var h0 = tape.constant(view.tracks[k].hidden.transpose());
          Var c0 = tape.constant(view.tracks[k].cell.transpose());
          auto [h1, c1] = netw.lstm_step(
              tape, params, tape.row(scores.det_informed, d), h0, c0);
          new_states.push_back({id, {h1, c1}});

          if (id < 0 || t + horizon >= seq.size()) continue;
          Mat target(1, 3 * horizon);
          bool complete = true;
          Pose2d prev;
          for (int i = 0; i <= horizon && complete; ++i) {
            const auto& objs = seq[t + i].objects;
            auto it = std::find_if(objs.begin(), objs.end(),
                                   [&](const auto& o) { return o.identity == id; });
            if (it == objs.end()) {
              complete = false;
              break;
            }
            if (i > 0) {
              target(0, 3 * (i - 1)) = it->pose.x - prev.x;
              target(0, 3 * (i - 1) + 1) = it->pose.y - prev.y;
              target(0, 3 * (i - 1) + 2) =
                  wrap_angle(it->pose.heading - prev.heading);
            }
            prev = it->pose;
          }
          if (!complete) continue;
          Var diff = tape.sub(netw.forecast_offsets(tape, params, h1),
                              tape.constant(target));
          fc = tape.add(fc, tape.sum(tape.cmul(diff, diff)));
          ++fc_terms;
        }
        if (fc_terms > 0) {
          fc = tape.scale(fc, 1.0 / (fc_terms * 3.0 * horizon));
          total = tape.add(total, tape.scale(fc, cfg.lambda_forecast));
        }

        const double loss_value = tape.scalar(total);
        if (!std::isfinite(loss_value) ||
            std::abs(loss_value) > cfg.divergence_limit)
          throw NumericDivergence("training loss diverged: " +
                                  std::to_string(loss_value));

        tape.backward(total);
        store.zero_grads();
        net::accumulate_grads(tape, params, store);
        store.sgd_step(cfg.lr, cfg.momentum);

        for (const auto& [id, hc] : new_states)
          lstm_state[id] = {tape.value(hc.first).row(0).transpose(),
                            tape.value(hc.second).row(0).transpose()};

        st.task += tape.scalar(task);
        st.iit += tape.scalar(iit);
        st.probe += tape.scalar(probe);
        st.forecast += fc_terms > 0 ? tape.scalar(fc) : 0.0;
        st.total += loss_value;
        ++st.frames;
      }
    }
    if (st.frames > 0) {
      st.task /= st.frames;
      st.iit /= st.frames;
      st.probe /= st.frames;
      st.forecast /= st.frames;
      st.total /= st.frames;
    }
    if (trace_file.is_open())
      trace_file << start_epoch + epoch << ' ' << st.task << ' ' << st.iit
                 << ' ' << st.probe << ' ' << st.forecast << ' ' << st.total
                 << '\n';
    if (trace) trace->push_back(st);
  }
  return store;
}

}  // namespace itrack::iit
