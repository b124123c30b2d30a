#pragma once

#include <pems/core.hpp>
#include <pems/dataio.hpp>
#include <pems/neural/adam.hpp>
#include <pems/neural/layers.hpp>
#include <pems/neural/tensor.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace pems::nn {

enum class LayerKind { dense, lstm, gru };

inline std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::dense: return "dense";
    case LayerKind::lstm: return "lstm";
    case LayerKind::gru: return "gru";
  }
  return "?";
}

inline LayerKind parse_layer_kind(const std::string& s) {
  if (s == "dense") return LayerKind::dense;
  if (s == "lstm") return LayerKind::lstm;
  if (s == "gru") return LayerKind::gru;
  throw ConfigError("unknown layer kind '" + s + "'");
}

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  std::size_t width = 1;
  Activation activation = Activation::linear;  // dense layers only
};

// Recurrent layers (if any) come first; every recurrent layer but the last emits its full
// hidden sequence, the last emits only its final state. The output layer has width 1.
struct NetSpec {
  std::size_t input_width = 1;
  std::vector<LayerSpec> layers;
  std::uint64_t seed = 0;

  bool recurrent() const { return !layers.empty() && layers.front().kind != LayerKind::dense; }

  void validate() const {
    require(input_width >= 1, "net: input width must be >= 1");
    require(!layers.empty(), "net: no layers");
    bool seen_dense = false;
    for (const auto& l : layers) {
      require(l.width >= 1, "net: layer width must be >= 1");
      if (l.kind == LayerKind::dense) seen_dense = true;
      else require(!seen_dense, "net: recurrent layers must precede dense layers");
    }
    require(layers.back().kind == LayerKind::dense && layers.back().width == 1, "net: output layer must be dense width 1");
  }
};

inline NetSpec dense_head(NetSpec spec, std::initializer_list<std::size_t> widths) {
  for (auto w : widths) spec.layers.push_back({LayerKind::dense, w, Activation::relu});
  spec.layers.push_back({LayerKind::dense, 1, Activation::linear});
  return spec;
}

// 256-128-64-32 ReLU, linear output.
inline NetSpec mlp_spec(std::size_t input_width, std::uint64_t seed = 0) {
  return dense_head({input_width, {}, seed}, {256, 128, 64, 32});
}

// Recurrent 64 -> recurrent 32 -> dense 128-64-32 ReLU -> linear output.
inline NetSpec lstm_spec(std::size_t input_width, std::uint64_t seed = 0) {
  NetSpec s{input_width, {{LayerKind::lstm, 64, Activation::linear}, {LayerKind::lstm, 32, Activation::linear}}, seed};
  return dense_head(std::move(s), {128, 64, 32});
}

inline NetSpec gru_spec(std::size_t input_width, std::uint64_t seed = 0) {
  NetSpec s{input_width, {{LayerKind::gru, 64, Activation::linear}, {LayerKind::gru, 32, Activation::linear}}, seed};
  return dense_head(std::move(s), {128, 64, 32});
}

inline nlohmann::json to_json(const NetSpec& spec) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : spec.layers)
    layers.push_back({{"kind", to_string(l.kind)},
                      {"width", l.width},
                      {"activation", l.activation == Activation::relu ? "relu" : "linear"}});
  return {{"input_width", spec.input_width}, {"seed", spec.seed}, {"layers", layers}};
}

inline NetSpec net_spec_from_json(const nlohmann::json& j) {
  NetSpec spec;
  spec.input_width = j.at("input_width").get<std::size_t>();
  spec.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& l : j.at("layers"))
    spec.layers.push_back({parse_layer_kind(l.at("kind").get<std::string>()), l.at("width").get<std::size_t>(),
                           l.at("activation").get<std::string>() == "relu" ? Activation::relu : Activation::linear});
  spec.validate();
  return spec;
}

using Layer = std::variant<DenseLayer, LstmLayer, GruLayer>;
using LayerCache = std::variant<DenseLayer::Cache, LstmLayer::Cache, GruLayer::Cache>;

class Network {
 public:
  Network() = default;

  // Zero-valued parameters with the shapes implied by spec.
  static Network zeros(const NetSpec& spec) {
    spec.validate();
    Network net;
    net.spec_ = spec;
    auto in = static_cast<Eigen::Index>(spec.input_width);
    std::size_t last_recurrent = 0;
    for (std::size_t k = 0; k < spec.layers.size(); ++k)
      if (spec.layers[k].kind != LayerKind::dense) last_recurrent = k;
    for (std::size_t k = 0; k < spec.layers.size(); ++k) {
      const auto& l = spec.layers[k];
      const auto w = static_cast<Eigen::Index>(l.width);
      switch (l.kind) {
        case LayerKind::dense: net.layers_.emplace_back(DenseLayer::zeros(in, w, l.activation)); break;
        case LayerKind::lstm: net.layers_.emplace_back(LstmLayer::zeros(in, w, k != last_recurrent)); break;
        case LayerKind::gru: net.layers_.emplace_back(GruLayer::zeros(in, w, k != last_recurrent)); break;
      }
      in = w;
    }
    return net;
  }

  // Seeded uniform fan-in initialisation: dense U(+-sqrt(6/fan_in)) for ReLU and
  // U(+-sqrt(3/fan_in)) for linear; recurrent U(+-1/sqrt(hidden)); biases 0 except
  // the LSTM forget gate (1).
  static Network initialize(const NetSpec& spec) {
    Network net = zeros(spec);
    std::mt19937_64 rng(spec.seed);
    auto fill = [&rng](Mat& m, double limit) {
      std::uniform_real_distribution<double> u(-limit, limit);
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = u(rng);
    };
    for (auto& layer : net.layers_) {
      std::visit(
          [&](auto& l) {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, DenseLayer>) {
              const double fan_in = static_cast<double>(l.W.cols());
              fill(l.W, std::sqrt((l.act == Activation::relu ? 6.0 : 3.0) / fan_in));
            } else {
              const double limit = 1.0 / std::sqrt(static_cast<double>(l.hidden()));
              fill(l.Wx, limit);
              fill(l.Wh, limit);
              if constexpr (std::is_same_v<L, LstmLayer>) l.b.middleRows(l.hidden(), l.hidden()).setOnes();
            }
          },
          layer);
    }
    return net;
  }

  const NetSpec& spec() const { return spec_; }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  // Input: one (input_width x batch) matrix per timestep. Output: 1 x batch.
  Mat forward(const Seq& xs, std::vector<LayerCache>* caches = nullptr) const {
    if (xs.empty()) throw ShapeError("net: empty input sequence");
    for (const auto& x : xs)
      if (x.rows() != static_cast<Eigen::Index>(spec_.input_width))
        throw ShapeError("net: input width " + std::to_string(x.rows()) + " != spec input width " +
                         std::to_string(spec_.input_width));
    if (caches) caches->clear();
    Seq cur = xs;
    for (const auto& layer : layers_) {
      std::visit(
          [&](const auto& l) {
            using L = std::decay_t<decltype(l)>;
            typename L::Cache* c = nullptr;
            if (caches) c = &std::get<typename L::Cache>(caches->emplace_back(std::in_place_type<typename L::Cache>));
            if constexpr (std::is_same_v<L, DenseLayer>) {
              if (cur.size() != 1) throw ShapeError("net: dense layer received a sequence longer than 1");
              cur.front() = l.forward(cur.front(), c);
            } else {
              cur = l.forward(cur, c);
            }
          },
          layer);
    }
    return cur.front();
  }

  // Accumulates d(sum(dout . output))/d(params) into grads (same shapes as *this).
  void backward(const std::vector<LayerCache>& caches, const Mat& dout, Network& grads) const {
    Seq d{dout};
    for (std::size_t k = layers_.size(); k-- > 0;) {
      std::visit(
          [&](const auto& l) {
            using L = std::decay_t<decltype(l)>;
            const auto& c = std::get<typename L::Cache>(caches[k]);
            auto& g = std::get<L>(grads.layers_[k]);
            if constexpr (std::is_same_v<L, DenseLayer>) d.front() = l.backward(c, d.front(), g);
            else d = l.backward(c, d, g);
          },
          layers_[k]);
    }
  }

  std::vector<Mat*> params() {
    std::vector<Mat*> out;
    for (auto& layer : layers_)
      std::visit(
          [&](auto& l) {
            for (auto* p : l.params()) out.push_back(p);
          },
          layer);
    return out;
  }

  std::vector<const Mat*> params() const {
    std::vector<const Mat*> out;
    for (auto* p : const_cast<Network*>(this)->params()) out.push_back(p);
    return out;
  }

  void set_zero() {
    for (auto* p : params()) p->setZero();
  }

 private:
  NetSpec spec_;
  std::vector<Layer> layers_;
};

struct TrainConfig {
  std::size_t num_epochs = 100;
  double learning_rate = 0.001;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  // Global-norm gradient clipping. Unset: 5 for recurrent nets, off for dense ones; 0 disables.
  std::optional<double> clip_norm;

  void validate() const {
    require(learning_rate > 0.0, "train: learning_rate must be > 0");
    require(batch_size >= 1, "train: batch_size must be >= 1");
    require(!clip_norm || *clip_norm >= 0.0, "train: clip_norm must be >= 0");
  }
};

struct TrainedNet {
  Network net;
  std::vector<double> loss_history;  // training MSE per epoch

  const NetSpec& spec() const { return net.spec(); }
};

namespace detail {

// Column batch for the given sample indices: T matrices of (d x batch).
inline Seq gather(const SequenceDataset& data, std::span<const std::size_t> idx) {
  const auto T = data.window_len;
  const auto d = static_cast<Eigen::Index>(data.n_features);
  Seq out(T, Mat(d, static_cast<Eigen::Index>(idx.size())));
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const Matrix& w = data.windows[idx[b]];
    for (std::size_t t = 0; t < T; ++t) out[t].col(static_cast<Eigen::Index>(b)) = w.row(static_cast<Eigen::Index>(t)).transpose();
  }
  return out;
}

inline Seq gather(const Matrix& rows, std::span<const std::size_t> idx) {
  Mat m(rows.cols(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t b = 0; b < idx.size(); ++b) m.col(static_cast<Eigen::Index>(b)) = rows.row(static_cast<Eigen::Index>(idx[b])).transpose();
  return {std::move(m)};
}

inline std::size_t sample_count(const SequenceDataset& d) { return d.size(); }
inline std::size_t sample_count(const Matrix& m) { return static_cast<std::size_t>(m.rows()); }
inline std::size_t input_width(const SequenceDataset& d) { return d.n_features; }
inline std::size_t input_width(const Matrix& m) { return static_cast<std::size_t>(m.cols()); }

template <class Data>
TrainedNet train(const NetSpec& spec, const Data& data, const Vector& y, const TrainConfig& cfg) {
  spec.validate();
  cfg.validate();
  const std::size_t n = sample_count(data);
  if (input_width(data) != spec.input_width)
    throw ShapeError("train: data has " + std::to_string(input_width(data)) + " features, spec expects " +
                     std::to_string(spec.input_width));
  if (static_cast<std::size_t>(y.size()) != n) throw ShapeError("train: target count mismatch");
  if (n == 0) throw DataError("train: no samples");

  TrainedNet out{Network::initialize(spec), {}};
  Network grads = Network::zeros(spec);
  AdamState adam;
  const double clip = cfg.clip_norm.value_or(spec.recurrent() ? 5.0 : 0.0);

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<LayerCache> caches;
  Mat target(1, 0);

  for (std::size_t epoch = 0; epoch < cfg.num_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sse = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, n - start);
      const std::span<const std::size_t> idx(order.data() + start, len);
      const Seq xb = gather(data, idx);
      target.resize(1, static_cast<Eigen::Index>(len));
      for (std::size_t b = 0; b < len; ++b) target(0, static_cast<Eigen::Index>(b)) = y(static_cast<Eigen::Index>(idx[b]));

      const Mat pred = out.net.forward(xb, &caches);
      const Mat diff = pred - target;
      sse += diff.squaredNorm();
      grads.set_zero();
      out.net.backward(caches, (2.0 / static_cast<double>(len)) * diff, grads);

      auto gp = grads.params();
      if (clip > 0.0) {
        double sq = 0.0;
        for (const auto* g : gp) sq += g->squaredNorm();
        const double norm = std::sqrt(sq);
        if (norm > clip)
          for (auto* g : gp) *g *= clip / norm;
      }
      adam_step(out.net.params(), gp, adam, cfg.learning_rate);
    }
    out.loss_history.push_back(sse / static_cast<double>(n));
  }
  return out;
}

template <class Data>
Vector predict(const TrainedNet& net, const Data& data) {
  const std::size_t n = sample_count(data);
  if (input_width(data) != net.spec().input_width) throw ShapeError("predict: feature count mismatch");
  Vector out(static_cast<Eigen::Index>(n));
  constexpr std::size_t chunk = 512;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t len = std::min(chunk, n - start);
    idx.resize(len);
    std::iota(idx.begin(), idx.end(), start);
    const Mat pred = net.net.forward(gather(data, idx));
    out.segment(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(len)) = pred.row(0).transpose();
  }
  return out;
}

}  // namespace detail

// Mini-batch training on squared error, samples reshuffled every epoch with a seeded RNG.
// Per-row data is a length-1 sequence; windows feed the recurrent layers.
inline TrainedNet train_net(const NetSpec& spec, const Matrix& x, const Vector& y, const TrainConfig& cfg) {
  return detail::train(spec, x, y, cfg);
}

inline TrainedNet train_net(const NetSpec& spec, const SequenceDataset& data, const TrainConfig& cfg) {
  if (!spec.recurrent() && data.window_len != 1)
    throw ShapeError("train: a dense-only net needs window length 1, got " + std::to_string(data.window_len));
  return detail::train(spec, data, data.targets, cfg);
}

inline Vector predict_net(const TrainedNet& net, const Matrix& x) { return detail::predict(net, x); }

inline Vector predict_net(const TrainedNet& net, const SequenceDataset& data) {
  if (!net.spec().recurrent() && data.window_len != 1) throw ShapeError("predict: dense-only net needs window length 1");
  return detail::predict(net, data);
}

// File layout: "PEMSNET1", u64 spec-JSON length, spec JSON bytes, u64 tensor count,
// then each parameter tensor (see write_tensor) in layer order.
inline void save_weights(std::ostream& out, const TrainedNet& net) {
  const std::string spec = to_json(net.spec()).dump();
  out.write("PEMSNET1", 8);
  detail::write_u64(out, spec.size());
  out.write(spec.data(), static_cast<std::streamsize>(spec.size()));
  const auto params = net.net.params();
  detail::write_u64(out, params.size());
  for (const auto* p : params) write_tensor(out, Tensor::from_matrix(*p));
}

inline TrainedNet load_weights(std::istream& in) {
  char magic[8];
  if (!in.read(magic, 8) || std::string(magic, 8) != "PEMSNET1") throw IoError("weights: bad magic");
  const auto len = detail::read_u64(in);
  std::string spec_text(len, '\0');
  if (!in.read(spec_text.data(), static_cast<std::streamsize>(len))) throw IoError("weights: truncated spec");
  TrainedNet net{Network::zeros(net_spec_from_json(nlohmann::json::parse(spec_text))), {}};
  auto params = net.net.params();
  if (detail::read_u64(in) != params.size()) throw IoError("weights: tensor count does not match spec");
  for (auto* p : params) {
    Mat m = read_tensor(in).to_matrix();
    if (m.rows() != p->rows() || m.cols() != p->cols()) throw IoError("weights: tensor shape does not match spec");
    *p = std::move(m);
  }
  return net;
}

inline void save_weights(const std::string& path, const TrainedNet& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  save_weights(out, net);
}

inline TrainedNet load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return load_weights(in);
}

inline void write_loss_history(const std::string& path, const TrainedNet& net) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "epoch,train_mse\n";
  for (std::size_t e = 0; e < net.loss_history.size(); ++e) out << e + 1 << ',' << format_exact(net.loss_history[e]) << '\n';
}

}  // namespace pems::nn
