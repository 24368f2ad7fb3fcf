#include "itrack/net/tracker_net.hpp"

#include <cmath>
#include <stdexcept>

namespace itrack::net {

namespace {

double cosine(const Vec& a, const Vec& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

// Normalized scalar description of an ego-frame box; 10 columns.
void box_row(const OrientedBox& b, double r_max, Eigen::Ref<Mat> out, int r) {
  out(r, 0) = b.x / r_max;
  out(r, 1) = b.y / r_max;
  out(r, 2) = b.z / 5.0;
  out(r, 3) = b.h / 5.0;
  out(r, 4) = b.l / 5.0;
  out(r, 5) = b.w / 5.0;
  out(r, 6) = b.vx / 15.0;
  out(r, 7) = b.vy / 15.0;
  out(r, 8) = std::sin(b.theta);
  out(r, 9) = std::cos(b.theta);
}

}  // namespace

const char* head_tag(scm::DecisionKind kind) {
  switch (kind) {
    case scm::DecisionKind::AppearanceMatch: return "app";
    case scm::DecisionKind::BboxMatch: return "bbox";
    case scm::DecisionKind::NewbornTrack: return "newborn";
    case scm::DecisionKind::FalsePositiveDetection: return "fpdet";
    case scm::DecisionKind::OutOfRangeTrack: return "oor";
    case scm::DecisionKind::FalsePositiveTrack: return "fpt";
    case scm::DecisionKind::OccludedTrack: return "occ";
  }
  throw std::logic_error("bad decision kind");
}

ParamVars lift_params(Tape& tape, const ParamStore& store) {
  ParamVars vars;
  for (const auto& [name, v] : store.values()) vars[name] = tape.leaf(v);
  return vars;
}

void accumulate_grads(const Tape& tape, const ParamVars& vars,
                      ParamStore& store) {
  for (const auto& [name, v] : vars) store.accumulate_grad(name, tape.grad(v));
}

TrackerNet::TrackerNet(NetConfig cfg) : cfg_(cfg) {
  if (cfg_.informed_dim % 8 != 0)
    throw std::invalid_argument("informed_dim must be a multiple of 8");
}

void TrackerNet::init_params(ParamStore& store, uint64_t seed) const {
  const int A = cfg_.appearance_dim, B = cfg_.bbox_feat_dim;
  const int H = cfg_.informed_dim, G = cfg_.lstm_hidden;
  std::mt19937_64 rng(seed);

  auto dense = [&](const std::string& name, int in, int out) {
    store.create(name + ".w", in, out, rng);
    store.create_zero(name + ".b", 1, out);
  };

  store.create("det_enc.w1", 11, B, rng);
  store.create_zero("det_enc.b1", 1, B);
  store.create("det_enc.w2", B, B, rng);
  store.create_zero("det_enc.b2", 1, B);
  dense("det_proj", B, H);
  dense("det_app", A, H);
  dense("trk_enc", 10 + G, H);
  dense("trk_app", A, H);

  for (int r = 0; r < cfg_.rounds; ++r) {
    for (const char* chan : {"app", "bbox"}) {
      const std::string p =
          "mp." + std::string(chan) + "." + std::to_string(r) + ".";
      store.create(p + "w_tt", H, H, rng);
      store.create(p + "w_dt", H, H, rng);
      store.create_zero(p + "b_t", 1, H);
      store.create(p + "w_dd", H, H, rng);
      store.create(p + "w_td", H, H, rng);
      store.create_zero(p + "b_d", 1, H);
    }
  }

  const std::pair<const char*, int> heads[] = {
      {"app", 2 * H + 3},  {"bbox", 2 * H + 3},   {"newborn", 2 * H + 4},
      {"fpdet", 2 * H + 4}, {"oor", 2 * H + 6},   {"fpt", 2 * H + 6},
      {"occ", 2 * H + 6}};
  for (const auto& [tag, in] : heads) {
    const std::string p = "head." + std::string(tag);
    store.create(p + ".w1", in, H, rng);
    store.create_zero(p + ".b1", 1, H);
    store.create(p + ".w2", H, 1, rng);
    store.create_zero(p + ".b2", 1, 1);
  }

  store.create("lstm.wx", 2 * H, 4 * G, rng);
  store.create("lstm.wh", G, 4 * G, rng);
  store.create_zero("lstm.b", 1, 4 * G);
  store.create("forecast.w", G, 3 * cfg_.horizon, rng);
  store.create_zero("forecast.b", 1, 3 * cfg_.horizon);
}

ScoreSet TrackerNet::forward(Tape& tape, const ParamVars& params,
                             const FrameView& frame,
                             const std::vector<CachePatch>& patches) const {
  const int A = cfg_.appearance_dim, H = cfg_.informed_dim;
  const int G = cfg_.lstm_hidden;
  const int D = static_cast<int>(frame.detections.size());
  const int K = static_cast<int>(frame.tracks.size());

  auto P = [&](const std::string& name) -> Var {
    auto it = params.find(name);
    if (it == params.end()) throw std::out_of_range("missing param: " + name);
    return it->second;
  };

  ScoreSet out;
  out.D = D;
  out.K = K;
  auto store_cache = [&](const std::string& slot, Var v) {
    for (const auto& p : patches)
      if (p.slot == slot) v = tape.replace_block(v, p.patch, p.row, p.col);
    out.cache[slot] = v;
    return v;
  };
  auto dense_tanh = [&](Var x, const std::string& name) {
    return tape.tanh(
        tape.add_rowvec(tape.matmul(x, P(name + ".w")), P(name + ".b")));
  };

  // Constant-velocity prediction of each track into the ego frame at T.
  std::vector<OrientedBox> pred(K);
  for (int k = 0; k < K; ++k) {
    const auto& tk = frame.tracks[k];
    pred[k] = scm::predicted_bbox_at_t(
        {{tk.box_prev.vx * frame.dt, tk.box_prev.vy * frame.dt, 0.0}},
        tk.box_prev, frame.ego);
  }

  // Detection bbox channel: two-layer encoder, then projection to H.
  Mat det_in(D, 11);
  Mat det_app_in(D, A);
  for (int d = 0; d < D; ++d) {
    box_row(frame.detections[d].box, frame.r_max, det_in, d);
    det_in(d, 10) = frame.detections[d].score;
    det_app_in.row(d) = frame.detections[d].appearance.transpose();
  }
  Var h1 = tape.tanh(tape.add_rowvec(
      tape.matmul(tape.constant(det_in), P("det_enc.w1")), P("det_enc.b1")));
  Var det_bbox_feat = tape.tanh(
      tape.add_rowvec(tape.matmul(h1, P("det_enc.w2")), P("det_enc.b2")));
  det_bbox_feat = store_cache("det_bbox_feat", det_bbox_feat);
  Var det_bbox = dense_tanh(det_bbox_feat, "det_proj");
  Var det_app = dense_tanh(tape.constant(det_app_in), "det_app");

  // Track channels: predicted box plus carried LSTM hidden state.
  Mat trk_in(K, 10 + G);
  Mat trk_app_in(K, A);
  for (int k = 0; k < K; ++k) {
    box_row(pred[k], frame.r_max, trk_in, k);
    Vec hid = frame.tracks[k].hidden.size() == G ? frame.tracks[k].hidden
                                                 : Vec::Zero(G);
    trk_in.row(k).tail(G) = hid.transpose();
    trk_app_in.row(k) = frame.tracks[k].appearance.transpose();
  }
  Var trk_bbox = dense_tanh(tape.constant(trk_in), "trk_enc");
  Var trk_app = dense_tanh(tape.constant(trk_app_in), "trk_app");

  // Cross-set message passing, separate weights per channel and round.
  struct Chan {
    const char* name;
    Var* t;
    Var* d;
  };
  for (int r = 0; r < cfg_.rounds; ++r) {
    for (Chan c : {Chan{"bbox", &trk_bbox, &det_bbox},
                   Chan{"app", &trk_app, &det_app}}) {
      const std::string p =
          "mp." + std::string(c.name) + "." + std::to_string(r) + ".";
      Var t_new = tape.add(
          *c.t, tape.tanh(tape.add_rowvec(
                    tape.add_rowvec(tape.matmul(*c.t, P(p + "w_tt")),
                                    tape.matmul(tape.mean_rows(*c.d),
                                                P(p + "w_dt"))),
                    P(p + "b_t"))));
      Var d_new = tape.add(
          *c.d, tape.tanh(tape.add_rowvec(
                    tape.add_rowvec(tape.matmul(*c.d, P(p + "w_dd")),
                                    tape.matmul(tape.mean_rows(*c.t),
                                                P(p + "w_td"))),
                    P(p + "b_d"))));
      *c.t = t_new;
      *c.d = d_new;
    }
  }
  det_bbox = store_cache("det_bbox_informed", det_bbox);
  det_app = store_cache("det_app_informed", det_app);
  trk_bbox = store_cache("track_bbox_informed", trk_bbox);
  trk_app = store_cache("track_app_informed", trk_app);
  out.det_informed = tape.concat_cols(det_bbox, det_app);

  // Hand-computed geometric context feeding each head.
  Mat trk_extra(K, 6);
  for (int k = 0; k < K; ++k) {
    double best_iou = 0.0, best_cos = -1.0;
    for (int d = 0; d < D; ++d) {
      best_iou = std::max(best_iou,
                          scm::iou_bev(pred[k], frame.detections[d].box));
      best_cos = std::max(best_cos, cosine(frame.tracks[k].appearance,
                                           frame.detections[d].appearance));
    }
    if (D == 0) best_cos = 0.0;
    trk_extra(k, 0) = std::hypot(pred[k].x, pred[k].y) / frame.r_max;
    trk_extra(k, 1) = scm::is_occluded(pred[k], frame.grid) ? 1.0 : 0.0;
    trk_extra(k, 2) = best_iou;
    trk_extra(k, 3) = best_iou >= frame.tau_iou ? 1.0 : 0.0;
    trk_extra(k, 4) = best_cos;
    trk_extra(k, 5) = best_cos >= frame.tau_app ? 1.0 : 0.0;
  }
  Mat det_extra(D, 4);
  for (int d = 0; d < D; ++d) {
    const auto& box = frame.detections[d].box;
    double best_iou = 0.0, best_cos = -1.0;
    for (int k = 0; k < K; ++k) {
      best_iou = std::max(best_iou, scm::iou_bev(pred[k], box));
      best_cos = std::max(best_cos, cosine(frame.tracks[k].appearance,
                                           frame.detections[d].appearance));
    }
    if (K == 0) best_cos = 0.0;
    const double dist = std::hypot(box.x, box.y);
    det_extra(d, 0) = dist / frame.r_max;
    det_extra(d, 1) = dist <= frame.r_max ? 1.0 : 0.0;
    det_extra(d, 2) = best_cos;
    det_extra(d, 3) = best_iou;
  }
  Mat pair_extra(D * K, 3);
  Mat sel_det = Mat::Zero(D * K, D);
  Mat sel_trk = Mat::Zero(D * K, K);
  for (int d = 0; d < D; ++d)
    for (int k = 0; k < K; ++k) {
      const int r = d * K + k;
      const auto& box = frame.detections[d].box;
      pair_extra(r, 0) = scm::iou_bev(pred[k], box);
      pair_extra(r, 1) = cosine(frame.tracks[k].appearance,
                                frame.detections[d].appearance);
      pair_extra(r, 2) =
          std::exp(-std::hypot(pred[k].x - box.x, pred[k].y - box.y) / 10.0);
      sel_det(r, d) = 1.0;
      sel_trk(r, k) = 1.0;
    }

  auto head = [&](const char* tag, Var input, const std::string& agg_slot) {
    const std::string p = "head." + std::string(tag);
    Var agg = tape.tanh(
        tape.add_rowvec(tape.matmul(input, P(p + ".w1")), P(p + ".b1")));
    agg = store_cache(agg_slot, agg);
    return tape.add_rowvec(tape.matmul(agg, P(p + ".w2")), P(p + ".b2"));
  };

  Var trk_head_in = tape.concat_cols(tape.concat_cols(trk_bbox, trk_app),
                                     tape.constant(trk_extra));
  out.s_oor = head("oor", trk_head_in, "oor.track_agg");
  out.s_fpt = head("fpt", trk_head_in, "fpt.track_agg");
  out.s_occ = head("occ", trk_head_in, "occ.track_agg");

  Var det_head_in = tape.concat_cols(tape.concat_cols(det_bbox, det_app),
                                     tape.constant(det_extra));
  out.s_newborn = head("newborn", det_head_in, "newborn.det_agg");
  out.s_fpdet = head("fpdet", det_head_in, "fpdet.det_agg");

  Var sd = tape.constant(sel_det), st = tape.constant(sel_trk);
  Var pair_ex = tape.constant(pair_extra);
  Var pair_app_in = tape.concat_cols(
      tape.concat_cols(tape.matmul(sd, det_app), tape.matmul(st, trk_app)),
      pair_ex);
  Var pair_bbox_in = tape.concat_cols(
      tape.concat_cols(tape.matmul(sd, det_bbox), tape.matmul(st, trk_bbox)),
      pair_ex);
  out.s_app = head("app", pair_app_in, "app.pair_agg");
  out.s_bbox = head("bbox", pair_bbox_in, "bbox.pair_agg");
  (void)H;
  return out;
}

std::pair<Var, Var> TrackerNet::lstm_step(Tape& tape, const ParamVars& params,
                                          Var x, Var h, Var c) const {
  const int G = cfg_.lstm_hidden;
  auto P = [&](const char* name) { return params.at(name); };
  Var z = tape.add(tape.add(tape.matmul(x, P("lstm.wx")),
                            tape.matmul(h, P("lstm.wh"))),
                   P("lstm.b"));
  Var i = tape.sigmoid(tape.slice_cols(z, 0, G));
  Var f = tape.sigmoid(tape.slice_cols(z, G, G));
  Var g = tape.tanh(tape.slice_cols(z, 2 * G, G));
  Var o = tape.sigmoid(tape.slice_cols(z, 3 * G, G));
  Var c2 = tape.add(tape.cmul(f, c), tape.cmul(i, g));
  Var h2 = tape.cmul(o, tape.tanh(c2));
  return {h2, c2};
}

Var TrackerNet::forecast_offsets(Tape& tape, const ParamVars& params,
                                 Var hidden) const {
  return tape.add(tape.matmul(hidden, params.at("forecast.w")),
                  params.at("forecast.b"));
}

scm::Forecast TrackerNet::offsets_to_forecast(const Mat& offsets) {
  if (offsets.rows() != 1 || offsets.cols() % 3 != 0)
    throw std::invalid_argument("offsets must be 1x3h");
  scm::Forecast f;
  for (int i = 0; i + 2 < offsets.cols(); i += 3)
    f.push_back({offsets(0, i), offsets(0, i + 1), offsets(0, i + 2)});
  return f;
}

std::vector<std::pair<std::string, int>> TrackerNet::cache_registry() const {
  const int B = cfg_.bbox_feat_dim, H = cfg_.informed_dim;
  return {{"det_bbox_feat", B},      {"det_bbox_informed", H},
          {"det_app_informed", H},   {"track_bbox_informed", H},
          {"track_app_informed", H}, {"app.pair_agg", H},
          {"bbox.pair_agg", H},      {"newborn.det_agg", H},
          {"fpdet.det_agg", H},      {"oor.track_agg", H},
          {"fpt.track_agg", H},      {"occ.track_agg", H}};
}

}  // namespace itrack::net
