#include "ive/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ive::model {

using num::Parameter;
using num::Shape;
using num::Tape;
using num::Tensor;

void ModelConfig::validate() const {
  if (d_model <= 0 || n_heads <= 0 || enc_layers <= 0 || dec_layers <= 0 || ffn_mult <= 0)
    throw std::invalid_argument("model config: dimensions must be positive");
  if (d_model % n_heads != 0) throw std::invalid_argument("model config: d_model must be divisible by n_heads");
  if (d_model % 2 != 0) throw std::invalid_argument("model config: d_model must be even");
  if (context_len < 1 || horizon < 1) throw std::invalid_argument("model config: context/horizon must be >= 1");
  if (n_stocks < 1) throw std::invalid_argument("model config: n_stocks must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("model config: dropout must be in [0, 1)");
  if (df_floor <= 0.0 || scale_floor <= 0.0) throw std::invalid_argument("model config: floors must be positive");
  if (feature_dim < 1 || time_dim < 1) throw std::invalid_argument("model config: feature dims must be >= 1");
}

double StudentTParams::stddev() const {
  if (df <= 2.0) throw std::domain_error("student-t stddev undefined for df <= 2");
  return scale * std::sqrt(df / (df - 2.0));
}

double student_t_nll(const StudentTParams& p, double x) {
  const double z = (x - p.loc) / p.scale;
  return -std::lgamma((p.df + 1.0) / 2.0) + std::lgamma(p.df / 2.0) + 0.5 * std::log(p.df * M_PI) +
         std::log(p.scale) + (p.df + 1.0) / 2.0 * std::log(1.0 + z * z / p.df);
}

double student_t_nll(std::span<const StudentTParams> params, std::span<const double> target) {
  if (params.size() != target.size() || params.empty())
    throw std::invalid_argument("student_t_nll: params/target length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) acc += student_t_nll(params[i], target[i]);
  return acc / static_cast<double>(params.size());
}

std::vector<double> greedy_predict(std::span<const StudentTParams> params) {
  std::vector<double> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.loc);
  return out;
}

double adjusted_predict(const StudentTParams& p, double c, bool gate) {
  return gate ? p.loc + c * p.stddev() : p.loc;
}

std::vector<double> adjusted_predict(std::span<const StudentTParams> params, double c, bool gate) {
  std::vector<double> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(adjusted_predict(p, c, gate));
  return out;
}

namespace {
double softplus_scalar(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
}  // namespace

double link_df(double raw, double df_floor) { return df_floor + std::max(softplus_scalar(raw), kLinkEps); }

double link_scale(double raw, double scale_floor) { return scale_floor + std::max(softplus_scalar(raw), kLinkEps); }

std::vector<double> positional_encoding(int length, int d_model) {
  if (d_model % 2 != 0) throw std::invalid_argument("positional_encoding: d_model must be even");
  if (length < 1) throw std::invalid_argument("positional_encoding: length must be >= 1");
  std::vector<double> pe(static_cast<std::size_t>(length) * d_model);
  for (int p = 0; p < length; ++p) {
    for (int i = 0; i < d_model / 2; ++i) {
      const double freq = std::pow(10000.0, 2.0 * i / static_cast<double>(d_model));
      pe[static_cast<std::size_t>(p) * d_model + 2 * i] = std::sin(p / freq);
      pe[static_cast<std::size_t>(p) * d_model + 2 * i + 1] = std::cos(p / freq);
    }
  }
  return pe;
}

// ---------------------------------------------------------------------------
// Parameter plumbing
// ---------------------------------------------------------------------------

namespace {

struct ParamStore {
  std::vector<std::unique_ptr<Parameter>> owned;

  Parameter* add(std::string name, Shape shape) {
    owned.push_back(std::make_unique<Parameter>(std::move(name), std::move(shape)));
    return owned.back().get();
  }

  std::vector<Parameter*> all() const {
    std::vector<Parameter*> out;
    out.reserve(owned.size());
    for (const auto& p : owned) out.push_back(p.get());
    return out;
  }
};

void init_xavier(Parameter& p, Rng& rng) {
  const double fan_in = p.shape.size() == 2 ? p.shape[0] : p.size();
  const double fan_out = p.shape.size() == 2 ? p.shape[1] : 1.0;
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (auto& v : p.value) v = rng.uniform(-limit, limit);
}

void init_normal(Parameter& p, Rng& rng, double stddev) {
  for (auto& v : p.value) v = rng.normal(0.0, stddev);
}

Tensor dropout(Tape& tape, Tensor x, double rate, Rng* rng) {
  if (rng == nullptr || rate <= 0.0) return x;
  const double keep = 1.0 - rate;
  std::vector<double> mask(x.value().size());
  for (auto& m : mask) m = rng->uniform() < keep ? 1.0 / keep : 0.0;
  return tape.mul(x, tape.constant(x.shape(), std::move(mask)));
}

struct LinearP {
  Parameter* w = nullptr;
  Parameter* b = nullptr;

  void create(ParamStore& store, const std::string& name, int in, int out) {
    w = store.add(name + ".w", {in, out});
    b = store.add(name + ".b", {out});
  }

  Tensor fwd(Tape& t, Tensor x) const { return t.add_rowvec(t.matmul(x, t.leaf(*w)), t.leaf(*b)); }
};

struct LayerNormP {
  Parameter* gain = nullptr;
  Parameter* bias = nullptr;

  void create(ParamStore& store, const std::string& name, int dim) {
    gain = store.add(name + ".gain", {dim});
    bias = store.add(name + ".bias", {dim});
    std::fill(gain->value.begin(), gain->value.end(), 1.0);
  }

  Tensor fwd(Tape& t, Tensor x) const { return t.layer_norm_lastdim(x, t.leaf(*gain), t.leaf(*bias)); }
};

struct AttentionP {
  LinearP q, k, v, o;
  int n_heads = 1;
  int d_model = 0;

  void create(ParamStore& store, const std::string& name, int d, int heads) {
    d_model = d;
    n_heads = heads;
    q.create(store, name + ".q", d, d);
    k.create(store, name + ".k", d, d);
    v.create(store, name + ".v", d, d);
    o.create(store, name + ".o", d, d);
  }

  Tensor fwd(Tape& t, Tensor queries, Tensor memory, bool causal) const {
    const int dh = d_model / n_heads;
    const int lq = queries.shape()[0];
    const int lk = memory.shape()[0];
    Tensor qp = q.fwd(t, queries);
    Tensor kp = k.fwd(t, memory);
    Tensor vp = v.fwd(t, memory);

    Tensor mask;
    if (causal) {
      std::vector<double> m(static_cast<std::size_t>(lq) * lk, 0.0);
      for (int i = 0; i < lq; ++i)
        for (int j = i + 1; j < lk; ++j) m[static_cast<std::size_t>(i) * lk + j] = -1e9;
      mask = t.constant({lq, lk}, std::move(m));
    }

    Tensor ctx;
    for (int h = 0; h < n_heads; ++h) {
      Tensor qh = t.slice_cols(qp, h * dh, dh);
      Tensor kh = t.slice_cols(kp, h * dh, dh);
      Tensor vh = t.slice_cols(vp, h * dh, dh);
      Tensor scores = t.scale(t.matmul(qh, t.transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
      if (causal) scores = t.add(scores, mask);
      Tensor attn = t.softmax_lastdim(scores);
      Tensor ctx_h = t.matmul(attn, vh);
      ctx = h == 0 ? ctx_h : t.concat_cols(ctx, ctx_h);
    }
    return o.fwd(t, ctx);
  }
};

struct FfnP {
  LinearP up, down;

  void create(ParamStore& store, const std::string& name, int d, int mult) {
    up.create(store, name + ".up", d, d * mult);
    down.create(store, name + ".down", d * mult, d);
  }

  Tensor fwd(Tape& t, Tensor x) const { return down.fwd(t, t.relu(up.fwd(t, x))); }
};

struct EncoderLayerP {
  AttentionP attn;
  FfnP ffn;
  LayerNormP ln1, ln2;

  void create(ParamStore& store, const std::string& name, const ModelConfig& cfg) {
    attn.create(store, name + ".attn", cfg.d_model, cfg.n_heads);
    ffn.create(store, name + ".ffn", cfg.d_model, cfg.ffn_mult);
    ln1.create(store, name + ".ln1", cfg.d_model);
    ln2.create(store, name + ".ln2", cfg.d_model);
  }

  Tensor fwd(Tape& t, Tensor x, double rate, Rng* rng) const {
    Tensor n1 = ln1.fwd(t, x);
    x = t.add(x, dropout(t, attn.fwd(t, n1, n1, false), rate, rng));
    x = t.add(x, dropout(t, ffn.fwd(t, ln2.fwd(t, x)), rate, rng));
    return x;
  }
};

struct DecoderLayerP {
  AttentionP self_attn, cross_attn;
  FfnP ffn;
  LayerNormP ln1, ln2, ln3;

  void create(ParamStore& store, const std::string& name, const ModelConfig& cfg) {
    self_attn.create(store, name + ".self", cfg.d_model, cfg.n_heads);
    cross_attn.create(store, name + ".cross", cfg.d_model, cfg.n_heads);
    ffn.create(store, name + ".ffn", cfg.d_model, cfg.ffn_mult);
    ln1.create(store, name + ".ln1", cfg.d_model);
    ln2.create(store, name + ".ln2", cfg.d_model);
    ln3.create(store, name + ".ln3", cfg.d_model);
  }

  Tensor fwd(Tape& t, Tensor y, Tensor memory, double rate, Rng* rng) const {
    Tensor n1 = ln1.fwd(t, y);
    y = t.add(y, dropout(t, self_attn.fwd(t, n1, n1, true), rate, rng));
    y = t.add(y, dropout(t, cross_attn.fwd(t, ln2.fwd(t, y), memory, false), rate, rng));
    y = t.add(y, dropout(t, ffn.fwd(t, ln3.fwd(t, y)), rate, rng));
    return y;
  }
};

void check_window(const features::FeatureWindow& w, const ModelConfig& cfg) {
  if (w.context_len != cfg.context_len || w.horizon != cfg.horizon)
    throw std::invalid_argument("window dims (" + std::to_string(w.context_len) + ", " + std::to_string(w.horizon) +
                                ") do not match model config (" + std::to_string(cfg.context_len) + ", " +
                                std::to_string(cfg.horizon) + ")");
  if (w.stock_id < 0 || w.stock_id >= cfg.n_stocks)
    throw std::invalid_argument("window stock_id " + std::to_string(w.stock_id) + " out of vocabulary [0, " +
                                std::to_string(cfg.n_stocks) + ")");
  if (static_cast<int>(w.context.size()) != cfg.context_len * cfg.feature_dim)
    throw std::invalid_argument("window feature dim does not match model config");
}

}  // namespace

// ---------------------------------------------------------------------------
// Forecaster
// ---------------------------------------------------------------------------

struct Forecaster::Impl {
  ModelConfig cfg;
  ParamStore store;
  LinearP input_proj, time_proj, head;
  Parameter* stock_emb = nullptr;
  std::vector<EncoderLayerP> enc;
  std::vector<DecoderLayerP> dec;
  LayerNormP enc_norm, dec_norm;
  std::vector<double> pe;  // max(context, horizon) x d_model

  explicit Impl(const ModelConfig& config, std::uint64_t seed) : cfg(config) {
    cfg.validate();
    input_proj.create(store, "input_proj", cfg.feature_dim, cfg.d_model);
    time_proj.create(store, "time_proj", cfg.time_dim, cfg.d_model);
    stock_emb = store.add("stock_emb", {cfg.n_stocks, cfg.d_model});
    enc.resize(cfg.enc_layers);
    for (int i = 0; i < cfg.enc_layers; ++i) enc[i].create(store, "enc" + std::to_string(i), cfg);
    dec.resize(cfg.dec_layers);
    for (int i = 0; i < cfg.dec_layers; ++i) dec[i].create(store, "dec" + std::to_string(i), cfg);
    enc_norm.create(store, "enc_norm", cfg.d_model);
    dec_norm.create(store, "dec_norm", cfg.d_model);
    head.create(store, "head", cfg.d_model, 3);
    pe = positional_encoding(std::max(cfg.context_len, cfg.horizon), cfg.d_model);

    Rng rng(seed);
    for (auto& p : store.owned) {
      if (p->name == "stock_emb") {
        init_normal(*p, rng, 0.02);
      } else if (p->shape.size() == 2) {
        init_xavier(*p, rng);
      }
      // biases and layer-norm parameters keep their constructed values
    }
  }

  Tensor pe_rows(Tape& t, int rows) const {
    std::vector<double> data(pe.begin(), pe.begin() + static_cast<std::size_t>(rows) * cfg.d_model);
    return t.constant({rows, cfg.d_model}, std::move(data));
  }

  Tensor forward_dist(Tape& t, const features::FeatureWindow& w, Rng* rng) {
    check_window(w, cfg);
    const double rate = cfg.dropout;

    Tensor ctx = t.constant({cfg.context_len, cfg.feature_dim}, w.context);
    Tensor emb = t.embedding_lookup(t.leaf(*stock_emb), w.stock_id);

    Tensor x = input_proj.fwd(t, ctx);
    x = t.add(x, pe_rows(t, cfg.context_len));
    x = t.add_rowvec(x, emb);
    x = dropout(t, x, rate, rng);
    for (const auto& layer : enc) x = layer.fwd(t, x, rate, rng);
    Tensor memory = enc_norm.fwd(t, x);

    Tensor tf = t.constant({cfg.horizon, cfg.time_dim}, w.time_enc_future);
    Tensor y = time_proj.fwd(t, tf);
    y = t.add(y, pe_rows(t, cfg.horizon));
    y = t.add_rowvec(y, emb);
    y = dropout(t, y, rate, rng);
    for (const auto& layer : dec) y = layer.fwd(t, y, memory, rate, rng);
    y = dec_norm.fwd(t, y);

    Tensor raw = head.fwd(t, y);  // [H, 3] -> (raw_nu, mu, raw_sigma)
    // max(softplus(x), eps) composed as relu(softplus(x) - eps) + eps.
    auto floored_softplus = [&](Tensor x) {
      return t.add_const(t.relu(t.add_const(t.softplus(x), -kLinkEps)), kLinkEps);
    };
    Tensor nu = t.add_const(floored_softplus(t.slice_cols(raw, 0, 1)), cfg.df_floor);
    Tensor mu = t.slice_cols(raw, 1, 1);
    Tensor sigma = t.add_const(floored_softplus(t.slice_cols(raw, 2, 1)), cfg.scale_floor);
    return t.concat_cols(nu, t.concat_cols(mu, sigma));
  }
};

Forecaster::Forecaster(const ModelConfig& config, std::uint64_t init_seed)
    : impl_(std::make_unique<Impl>(config, init_seed)) {}

Forecaster::~Forecaster() = default;

num::Tensor Forecaster::forward_dist(Tape& tape, const features::FeatureWindow& window, Rng* dropout_rng) {
  return impl_->forward_dist(tape, window, dropout_rng);
}

std::vector<StudentTParams> Forecaster::forward(const features::FeatureWindow& window) {
  Tape tape;
  Tensor dist = impl_->forward_dist(tape, window, nullptr);
  std::vector<StudentTParams> out(impl_->cfg.horizon);
  for (int h = 0; h < impl_->cfg.horizon; ++h) {
    StudentTParams& p = out[h];
    p.df = dist.value()[static_cast<std::size_t>(h) * 3 + 0];
    p.loc = dist.value()[static_cast<std::size_t>(h) * 3 + 1];
    p.scale = dist.value()[static_cast<std::size_t>(h) * 3 + 2];
    if (!std::isfinite(p.df) || !std::isfinite(p.loc) || !std::isfinite(p.scale))
      throw std::runtime_error("forecaster produced a non-finite output (training diverged?)");
  }
  return out;
}

num::Tensor Forecaster::loss(Tape& tape, const features::FeatureWindow& window, Rng* dropout_rng) {
  Tensor dist = impl_->forward_dist(tape, window, dropout_rng);
  const int h = impl_->cfg.horizon;
  Tensor nu = tape.slice_cols(dist, 0, 1);
  Tensor mu = tape.slice_cols(dist, 1, 1);
  Tensor sigma = tape.slice_cols(dist, 2, 1);
  Tensor target = tape.constant({h, 1}, window.target);

  Tensor z = tape.div(tape.sub(target, mu), sigma);
  Tensor nu_p1_half = tape.scale(tape.add_const(nu, 1.0), 0.5);
  Tensor nu_half = tape.scale(nu, 0.5);
  Tensor lg = tape.sub(tape.lgamma(nu_p1_half), tape.lgamma(nu_half));
  Tensor log_nu_pi = tape.scale(tape.log(tape.scale(nu, M_PI)), 0.5);
  Tensor log_tail = tape.mul(nu_p1_half, tape.log(tape.add_const(tape.div(tape.square(z), nu), 1.0)));
  Tensor nll = tape.add(tape.add(tape.add(tape.neg(lg), log_nu_pi), tape.log(sigma)), log_tail);
  return tape.mean(nll);
}

std::vector<double> Forecaster::point_forecast(const features::FeatureWindow& window) {
  return greedy_predict(forward(window));
}

std::vector<Parameter*> Forecaster::parameters() { return impl_->store.all(); }

const ModelConfig& Forecaster::config() const { return impl_->cfg; }

// ---------------------------------------------------------------------------
// Recurrent baselines
// ---------------------------------------------------------------------------

std::string baseline_name(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::RNN_HR: return "rnn-hr";
    case BaselineKind::LSTM_HR: return "lstm-hr";
    case BaselineKind::BILSTM_HR: return "bilstm-hr";
  }
  throw std::logic_error("bad baseline enum");
}

BaselineKind parse_baseline(std::string_view name) {
  if (name == "rnn-hr") return BaselineKind::RNN_HR;
  if (name == "lstm-hr") return BaselineKind::LSTM_HR;
  if (name == "bilstm-hr") return BaselineKind::BILSTM_HR;
  throw std::runtime_error("unknown baseline '" + std::string(name) + "'");
}

namespace {
constexpr int kBaselineEmbDim = 8;
}

struct Baseline::Impl {
  BaselineKind kind;
  ModelConfig cfg;
  ParamStore store;
  Parameter* stock_emb = nullptr;
  // Recurrent weights; the *2 set backs the reverse direction of the BiLSTM.
  Parameter *wx = nullptr, *wh = nullptr, *b = nullptr;
  Parameter *wx2 = nullptr, *wh2 = nullptr, *b2 = nullptr;
  LinearP head;

  Impl(BaselineKind k, const ModelConfig& config, std::uint64_t seed) : kind(k), cfg(config) {
    cfg.validate();
    const int in = cfg.feature_dim + kBaselineEmbDim;
    const int hid = cfg.d_model;
    const int gate_mult = kind == BaselineKind::RNN_HR ? 1 : 4;
    stock_emb = store.add("stock_emb", {cfg.n_stocks, kBaselineEmbDim});
    wx = store.add("cell.wx", {in, hid * gate_mult});
    wh = store.add("cell.wh", {hid, hid * gate_mult});
    b = store.add("cell.b", {hid * gate_mult});
    if (kind == BaselineKind::BILSTM_HR) {
      wx2 = store.add("cell_rev.wx", {in, hid * gate_mult});
      wh2 = store.add("cell_rev.wh", {hid, hid * gate_mult});
      b2 = store.add("cell_rev.b", {hid * gate_mult});
    }
    const int head_in = kind == BaselineKind::BILSTM_HR ? 2 * hid : hid;
    head.create(store, "head", head_in, cfg.horizon);

    Rng rng(seed);
    for (auto& p : store.owned) {
      if (p->name == "stock_emb") {
        init_normal(*p, rng, 0.1);
      } else if (p->shape.size() == 2) {
        init_xavier(*p, rng);
      }
    }
    if (kind != BaselineKind::RNN_HR) {
      // forget-gate bias starts open
      const int hid2 = cfg.d_model;
      for (int i = hid2; i < 2 * hid2; ++i) {
        b->value[i] = 1.0;
        if (b2 != nullptr) b2->value[i] = 1.0;
      }
    }
  }

  // Final hidden state of one directional pass.
  Tensor run_direction(Tape& t, Tensor ctx, Tensor emb_row, Parameter& wxp, Parameter& whp, Parameter& bp,
                       bool reversed) const {
    const int hid = cfg.d_model;
    Tensor wx_t = t.leaf(wxp);
    Tensor wh_t = t.leaf(whp);
    Tensor b_t = t.leaf(bp);
    Tensor h = t.constant({1, hid}, std::vector<double>(hid, 0.0));
    Tensor c = h;
    for (int step = 0; step < cfg.context_len; ++step) {
      const int idx = reversed ? cfg.context_len - 1 - step : step;
      Tensor u = t.concat_cols(t.slice_rows(ctx, idx, 1), emb_row);
      Tensor pre = t.add_rowvec(t.add(t.matmul(u, wx_t), t.matmul(h, wh_t)), b_t);
      if (kind == BaselineKind::RNN_HR) {
        h = t.tanh(pre);
      } else {
        Tensor ig = t.sigmoid(t.slice_cols(pre, 0, hid));
        Tensor fg = t.sigmoid(t.slice_cols(pre, hid, hid));
        Tensor gg = t.tanh(t.slice_cols(pre, 2 * hid, hid));
        Tensor og = t.sigmoid(t.slice_cols(pre, 3 * hid, hid));
        c = t.add(t.mul(fg, c), t.mul(ig, gg));
        h = t.mul(og, t.tanh(c));
      }
    }
    return h;
  }

  Tensor predict(Tape& t, const features::FeatureWindow& w) const {
    check_window(w, cfg);
    Tensor ctx = t.constant({cfg.context_len, cfg.feature_dim}, w.context);
    Tensor emb = t.reshape(t.embedding_lookup(t.leaf(*stock_emb), w.stock_id), {1, kBaselineEmbDim});
    Tensor h = run_direction(t, ctx, emb, *wx, *wh, *b, false);
    if (kind == BaselineKind::BILSTM_HR) {
      Tensor h_rev = run_direction(t, ctx, emb, *wx2, *wh2, *b2, true);
      h = t.concat_cols(h, h_rev);
    }
    return t.reshape(head.fwd(t, h), {cfg.horizon});
  }
};

Baseline::Baseline(BaselineKind kind, const ModelConfig& config, std::uint64_t init_seed)
    : impl_(std::make_unique<Impl>(kind, config, init_seed)) {}

Baseline::~Baseline() = default;

num::Tensor Baseline::loss(Tape& tape, const features::FeatureWindow& window, Rng*) {
  Tensor pred = impl_->predict(tape, window);
  Tensor target = tape.constant({impl_->cfg.horizon}, window.target);
  return tape.mean(tape.square(tape.sub(pred, target)));
}

std::vector<double> Baseline::point_forecast(const features::FeatureWindow& window) {
  Tape tape;
  Tensor pred = impl_->predict(tape, window);
  return pred.value();
}

std::vector<Parameter*> Baseline::parameters() { return impl_->store.all(); }

const ModelConfig& Baseline::config() const { return impl_->cfg; }

BaselineKind Baseline::baseline_kind() const { return impl_->kind; }

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[9] = "IVECKPT1";

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

void put_string(std::ofstream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::ifstream& in) {
  const auto len = get<std::uint32_t>(in);
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainableModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  out.write(kMagic, 8);
  const ModelConfig& c = model.config();
  put_string(out, const_cast<TrainableModel&>(model).kind());
  for (int v : {c.d_model, c.n_heads, c.enc_layers, c.dec_layers, c.ffn_mult, c.context_len, c.horizon, c.n_stocks,
                c.feature_dim, c.time_dim})
    put<std::int32_t>(out, v);
  for (double v : {c.dropout, c.df_floor, c.scale_floor}) put<double>(out, v);

  auto params = const_cast<TrainableModel&>(model).parameters();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    put_string(out, p->name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->shape.size()));
    for (int d : p->shape) put<std::int32_t>(out, d);
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("write failed for checkpoint '" + path + "'");
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint '" + path + "': bad magic (unknown format or version)");

  Checkpoint ckpt;
  ckpt.kind = get_string(in);
  ModelConfig& c = ckpt.config;
  c.d_model = get<std::int32_t>(in);
  c.n_heads = get<std::int32_t>(in);
  c.enc_layers = get<std::int32_t>(in);
  c.dec_layers = get<std::int32_t>(in);
  c.ffn_mult = get<std::int32_t>(in);
  c.context_len = get<std::int32_t>(in);
  c.horizon = get<std::int32_t>(in);
  c.n_stocks = get<std::int32_t>(in);
  c.feature_dim = get<std::int32_t>(in);
  c.time_dim = get<std::int32_t>(in);
  c.dropout = get<double>(in);
  c.df_floor = get<double>(in);
  c.scale_floor = get<double>(in);

  const auto n_tensors = get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = get_string(in);
    const auto ndim = get<std::uint32_t>(in);
    long count = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) count *= get<std::int32_t>(in);
    std::vector<double> data(count);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint '" + path + "': truncated tensor data");
    ckpt.tensors.emplace_back(std::move(name), std::move(data));
  }
  return ckpt;
}

std::unique_ptr<TrainableModel> load_model(const std::string& path) {
  Checkpoint ckpt = read_checkpoint(path);
  std::unique_ptr<TrainableModel> model;
  if (ckpt.kind == "ive") {
    model = std::make_unique<Forecaster>(ckpt.config, 0);
  } else {
    model = std::make_unique<Baseline>(parse_baseline(ckpt.kind), ckpt.config, 0);
  }
  auto params = model->parameters();
  if (params.size() != ckpt.tensors.size())
    throw std::runtime_error("checkpoint '" + path + "': parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->name != ckpt.tensors[i].first)
      throw std::runtime_error("checkpoint '" + path + "': parameter name mismatch at index " + std::to_string(i) +
                               " (" + params[i]->name + " vs " + ckpt.tensors[i].first + ")");
    if (params[i]->value.size() != ckpt.tensors[i].second.size())
      throw std::runtime_error("checkpoint '" + path + "': parameter size mismatch for " + params[i]->name);
    params[i]->value = ckpt.tensors[i].second;
  }
  return model;
}

}  // namespace ive::model
