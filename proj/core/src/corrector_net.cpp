#include "understory/corrector_net.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <thread>

#include <Eigen/Core>

#include "understory/error.hpp"
#include "understory/rng.hpp"

namespace understory {

void NetConfig::validate() const {
  require_input(input.w >= 1 && input.h >= 1 && input.d >= 1, "network input dims must be positive");
  require_input(channels.size() == 8, "the corrector has exactly eight convolution stages");
  for (int c : channels) require_input(c >= 1, "channel widths must be positive");
  for (int h : hidden) require_input(h >= 1, "hidden widths must be positive");
}

std::uint64_t NetConfig::flatten_size() const {
  return static_cast<std::uint64_t>(channels.back()) * input.count();
}

std::uint64_t NetConfig::param_count() const { return ParamLayout::of(*this).total; }

std::uint64_t param_count(int pw, int ph, int pd) {
  require_input(pw >= 1 && ph >= 1 && pd >= 1, "patch dims must be positive");
  NetConfig c;
  c.input = {pw, ph, pd};
  return c.param_count();
}

double gelu(double x) { return 0.5 * x * std::erfc(-x * std::numbers::sqrt2 / 2.0); }

double gelu_grad(double x) {
  const double cdf = 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0);
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

ParamLayout ParamLayout::of(const NetConfig& config) {
  config.validate();
  ParamLayout l;
  std::size_t off = 0;
  int c_in = 1;
  for (int c_out : config.channels) {
    l.conv_weight.push_back({off, static_cast<std::size_t>(c_out), static_cast<std::size_t>(c_in) * 27});
    off += l.conv_weight.back().size();
    l.conv_bias.push_back({off, static_cast<std::size_t>(c_out), 1});
    off += static_cast<std::size_t>(c_out);
    c_in = c_out;
  }
  std::size_t in = config.flatten_size();
  std::vector<int> widths = config.hidden;
  widths.push_back(1);
  for (int out : widths) {
    l.dense_weight.push_back({off, static_cast<std::size_t>(out), in});
    off += l.dense_weight.back().size();
    l.dense_bias.push_back({off, static_cast<std::size_t>(out), 1});
    off += static_cast<std::size_t>(out);
    in = static_cast<std::size_t>(out);
  }
  l.total = off;
  return l;
}

template <typename T>
LayerModel<T> LayerModel<T>::zeros(const NetConfig& config) {
  LayerModel m;
  m.config = config;
  m.params.assign(ParamLayout::of(config).total, T(0));
  return m;
}

template <typename T>
LayerModel<T> LayerModel<T>::initialized(const NetConfig& config, std::uint64_t seed, T output_bias) {
  LayerModel m = zeros(config);
  const ParamLayout l = m.layout();
  Rng rng(seed);
  auto fill = [&](const ParamBlock& b, double stddev) {
    for (std::size_t i = 0; i < b.size(); ++i) m.params[b.offset + i] = static_cast<T>(stddev * rng.normal());
  };
  for (const auto& b : l.conv_weight) fill(b, std::sqrt(2.0 / static_cast<double>(b.cols)));
  for (std::size_t i = 0; i < l.dense_weight.size(); ++i) {
    const auto& b = l.dense_weight[i];
    const bool last = i + 1 == l.dense_weight.size();
    fill(b, std::sqrt((last ? 1.0 : 2.0) / static_cast<double>(b.cols)));
  }
  m.params[l.dense_bias.back().offset] = output_bias;
  return m;
}

template <typename T>
LayerModel<T> LayerModel<T>::identity_fallback(const NetConfig& config) {
  LayerModel m = zeros(config);
  m.identity = true;
  return m;
}

template <typename T>
LayerModel<T> convert(const LayerModel<float>& model) {
  LayerModel<T> out;
  out.config = model.config;
  out.identity = model.identity;
  out.id = model.id;
  out.params.assign(model.params.begin(), model.params.end());
  return out;
}

namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const Mat<T>>;
template <typename T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;

// neighbours[s * 27 + k] = spatial index of the k-th kernel tap around s, or -1.
std::vector<int> neighbour_table(const PatchDims& p) {
  const int S = static_cast<int>(p.count());
  std::vector<int> nb(static_cast<std::size_t>(S) * 27, -1);
  for (int z = 0; z < p.d; ++z) {
    for (int y = 0; y < p.h; ++y) {
      for (int x = 0; x < p.w; ++x) {
        const int s = (z * p.h + y) * p.w + x;
        int k = 0;
        for (int dz = -1; dz <= 1; ++dz) {
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx, ++k) {
              const int zz = z + dz, yy = y + dy, xx = x + dx;
              if (zz >= 0 && zz < p.d && yy >= 0 && yy < p.h && xx >= 0 && xx < p.w) {
                nb[static_cast<std::size_t>(s) * 27 + k] = (zz * p.h + yy) * p.w + xx;
              }
            }
          }
        }
      }
    }
  }
  return nb;
}

// act: [c_in][batch * S]  ->  cols: [c_in * 27][batch * S]
template <typename T>
void im2col(const Mat<T>& act, int S, std::size_t batch, const std::vector<int>& nb, Mat<T>& cols) {
  const Eigen::Index c_in = act.rows();
  cols.resize(c_in * 27, static_cast<Eigen::Index>(batch) * S);
  for (Eigen::Index c = 0; c < c_in; ++c) {
    const T* src = act.row(c).data();
    for (int k = 0; k < 27; ++k) {
      T* dst = cols.row(c * 27 + k).data();
      for (std::size_t b = 0; b < batch; ++b) {
        const T* sb = src + b * S;
        T* db = dst + b * S;
        for (int s = 0; s < S; ++s) {
          const int n = nb[static_cast<std::size_t>(s) * 27 + k];
          db[s] = n >= 0 ? sb[n] : T(0);
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add column gradients back onto activations.
template <typename T>
void col2im(const Mat<T>& dcols, int S, std::size_t batch, const std::vector<int>& nb, Mat<T>& dact) {
  const Eigen::Index c_in = dcols.rows() / 27;
  dact.setZero(c_in, static_cast<Eigen::Index>(batch) * S);
  for (Eigen::Index c = 0; c < c_in; ++c) {
    T* dst = dact.row(c).data();
    for (int k = 0; k < 27; ++k) {
      const T* src = dcols.row(c * 27 + k).data();
      for (std::size_t b = 0; b < batch; ++b) {
        T* db = dst + b * S;
        const T* sb = src + b * S;
        for (int s = 0; s < S; ++s) {
          const int n = nb[static_cast<std::size_t>(s) * 27 + k];
          if (n >= 0) db[n] += sb[s];
        }
      }
    }
  }
}

template <typename T>
T gelu_t(T x) {
  return T(0.5) * x * std::erfc(-x * T(std::numbers::sqrt2 / 2.0));
}

template <typename T>
T gelu_grad_t(T x) {
  const T cdf = T(0.5) * std::erfc(-x * T(std::numbers::sqrt2 / 2.0));
  const T pdf = std::exp(T(-0.5) * x * x) * T(0.3989422804014327);
  return cdf + x * pdf;
}

template <typename T>
void apply_gelu(const Mat<T>& z, Mat<T>& a) {
  a.resize(z.rows(), z.cols());
  const T* src = z.data();
  T* dst = a.data();
  for (Eigen::Index i = 0; i < z.size(); ++i) dst[i] = gelu_t(src[i]);
}

// Activations of one forward pass over a chunk, kept for the backward pass.
template <typename T>
struct Trace {
  std::vector<Mat<T>> conv_in;   // stage inputs [c_in][B*S]
  std::vector<Mat<T>> conv_pre;  // pre-activations [c_out][B*S]
  std::vector<Mat<T>> dense_in;  // [B][in]
  std::vector<Mat<T>> dense_pre; // [B][out]
  Mat<T> output;                 // [B][1]
};

template <typename T>
class Engine {
 public:
  explicit Engine(const LayerModel<T>& model)
      : model_(model), layout_(model.layout()), S_(static_cast<int>(model.config.input.count())),
        nb_(neighbour_table(model.config.input)) {}

  void run_forward(std::span<const T> inputs, std::size_t batch, Trace<T>& tr) const {
    const auto& cfg = model_.config;
    const std::size_t n_conv = cfg.channels.size();
    tr.conv_in.resize(n_conv);
    tr.conv_pre.resize(n_conv);
    Mat<T> act = Eigen::Map<const Mat<T>>(inputs.data(), 1, static_cast<Eigen::Index>(batch) * S_);
    Mat<T> cols;
    for (std::size_t l = 0; l < n_conv; ++l) {
      const ParamBlock& wb = layout_.conv_weight[l];
      const ParamBlock& bb = layout_.conv_bias[l];
      im2col(act, S_, batch, nb_, cols);
      const ConstMap<T> W(model_.params.data() + wb.offset, wb.rows, wb.cols);
      const Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bias(model_.params.data() + bb.offset, bb.rows);
      Mat<T> z = W * cols;
      z.colwise() += bias;
      tr.conv_in[l] = std::move(act);
      apply_gelu(z, act);
      tr.conv_pre[l] = std::move(z);
    }
    // Flatten per sample, channel-major: x[b][c * S + s] = act[c][b * S + s].
    const Eigen::Index C = act.rows();
    Mat<T> x(static_cast<Eigen::Index>(batch), C * S_);
    for (std::size_t b = 0; b < batch; ++b) {
      for (Eigen::Index c = 0; c < C; ++c) {
        for (int s = 0; s < S_; ++s) x(static_cast<Eigen::Index>(b), c * S_ + s) = act(c, static_cast<Eigen::Index>(b) * S_ + s);
      }
    }
    const std::size_t n_dense = layout_.dense_weight.size();
    tr.dense_in.resize(n_dense);
    tr.dense_pre.resize(n_dense);
    for (std::size_t i = 0; i < n_dense; ++i) {
      const ParamBlock& wb = layout_.dense_weight[i];
      const ParamBlock& bb = layout_.dense_bias[i];
      const ConstMap<T> W(model_.params.data() + wb.offset, wb.rows, wb.cols);
      const Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bias(model_.params.data() + bb.offset, bb.rows);
      Mat<T> h = x * W.transpose();
      h.rowwise() += bias;
      tr.dense_in[i] = std::move(x);
      if (i + 1 < n_dense) {
        apply_gelu(h, x);
        tr.dense_pre[i] = std::move(h);
      } else {
        tr.output = h;
        tr.dense_pre[i] = std::move(h);
      }
    }
  }

  // Gradient of sum_b (out_b - t_b)^2, accumulated into grad.
  T run_backward(const Trace<T>& tr, std::span<const T> targets, std::size_t batch, std::span<T> grad) const {
    const auto B = static_cast<Eigen::Index>(batch);
    Mat<T> dh(B, 1);
    T sse = T(0);
    for (Eigen::Index b = 0; b < B; ++b) {
      const T e = tr.output(b, 0) - targets[static_cast<std::size_t>(b)];
      sse += e * e;
      dh(b, 0) = T(2) * e;
    }
    const std::size_t n_dense = layout_.dense_weight.size();
    Mat<T> dx;
    for (std::size_t i = n_dense; i-- > 0;) {
      const ParamBlock& wb = layout_.dense_weight[i];
      const ParamBlock& bb = layout_.dense_bias[i];
      Eigen::Map<Mat<T>> dW(grad.data() + wb.offset, wb.rows, wb.cols);
      VecMap<T> db(grad.data() + bb.offset, bb.rows);
      dW.noalias() += dh.transpose() * tr.dense_in[i];
      db += dh.colwise().sum().transpose();
      const ConstMap<T> W(model_.params.data() + wb.offset, wb.rows, wb.cols);
      dx.noalias() = dh * W;
      if (i > 0) {
        const Mat<T>& pre = tr.dense_pre[i - 1];
        dh.resize(pre.rows(), pre.cols());
        for (Eigen::Index k = 0; k < pre.size(); ++k) dh.data()[k] = dx.data()[k] * gelu_grad_t(pre.data()[k]);
      }
    }
    // Un-flatten into the last conv activation gradient.
    const std::size_t n_conv = layout_.conv_weight.size();
    const Eigen::Index C = static_cast<Eigen::Index>(layout_.conv_weight.back().rows);
    Mat<T> da(C, B * S_);
    for (Eigen::Index b = 0; b < B; ++b) {
      for (Eigen::Index c = 0; c < C; ++c) {
        for (int s = 0; s < S_; ++s) da(c, b * S_ + s) = dx(b, c * S_ + s);
      }
    }
    Mat<T> dz, cols, dcols;
    for (std::size_t l = n_conv; l-- > 0;) {
      const Mat<T>& pre = tr.conv_pre[l];
      dz.resize(pre.rows(), pre.cols());
      for (Eigen::Index k = 0; k < pre.size(); ++k) dz.data()[k] = da.data()[k] * gelu_grad_t(pre.data()[k]);
      const ParamBlock& wb = layout_.conv_weight[l];
      const ParamBlock& bb = layout_.conv_bias[l];
      im2col(tr.conv_in[l], S_, batch, nb_, cols);
      Eigen::Map<Mat<T>> dW(grad.data() + wb.offset, wb.rows, wb.cols);
      VecMap<T> db(grad.data() + bb.offset, bb.rows);
      dW.noalias() += dz * cols.transpose();
      db += dz.rowwise().sum();
      if (l > 0) {
        const ConstMap<T> W(model_.params.data() + wb.offset, wb.rows, wb.cols);
        dcols.noalias() = W.transpose() * dz;
        col2im(dcols, S_, batch, nb_, da);
      }
    }
    return sse;
  }

 private:
  const LayerModel<T>& model_;
  ParamLayout layout_;
  int S_;
  std::vector<int> nb_;
};

constexpr std::size_t kForwardChunk = 256;

}  // namespace

template <typename T>
std::vector<T> forward(const LayerModel<T>& model, std::span<const T> inputs) {
  const std::size_t S = model.config.input.count();
  require_input(S > 0 && inputs.size() % S == 0, "input length is not a multiple of the patch size");
  const std::size_t batch = inputs.size() / S;
  std::vector<T> out(batch);
  if (model.identity) {
    for (std::size_t b = 0; b < batch; ++b) out[b] = inputs[b * S];
    return out;
  }
  require_input(model.params.size() == ParamLayout::of(model.config).total, "model parameters do not match config");
  const Engine<T> engine(model);
  Trace<T> tr;
  for (std::size_t b0 = 0; b0 < batch; b0 += kForwardChunk) {
    const std::size_t n = std::min(kForwardChunk, batch - b0);
    engine.run_forward(inputs.subspan(b0 * S, n * S), n, tr);
    for (std::size_t b = 0; b < n; ++b) out[b0 + b] = tr.output(static_cast<Eigen::Index>(b), 0);
  }
  return out;
}

template <typename T>
LossGradient<T> backward(const LayerModel<T>& model, std::span<const T> inputs, std::span<const T> targets,
                         int workers, std::size_t chunk) {
  const std::size_t S = model.config.input.count();
  require_input(!targets.empty(), "backward needs a non-empty batch");
  require_input(inputs.size() == targets.size() * S, "input and target counts disagree");
  require_input(!model.identity, "identity fallback models have no trainable parameters");
  require_input(model.params.size() == ParamLayout::of(model.config).total, "model parameters do not match config");
  chunk = std::max<std::size_t>(1, chunk);
  const std::size_t batch = targets.size();
  const std::size_t n_chunks = (batch + chunk - 1) / chunk;

  const Engine<T> engine(model);
  std::vector<std::vector<T>> partial(n_chunks, std::vector<T>(model.params.size(), T(0)));
  std::vector<T> sse(n_chunks, T(0));
  auto work = [&](std::size_t first, std::size_t stride) {
    Trace<T> tr;
    for (std::size_t c = first; c < n_chunks; c += stride) {
      const std::size_t b0 = c * chunk;
      const std::size_t n = std::min(chunk, batch - b0);
      engine.run_forward(inputs.subspan(b0 * S, n * S), n, tr);
      sse[c] = engine.run_backward(tr, targets.subspan(b0, n), n, partial[c]);
    }
  };
  const auto w = static_cast<std::size_t>(std::clamp<int>(workers, 1, static_cast<int>(n_chunks)));
  if (w == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < w; ++i) pool.emplace_back(work, i, w);
    for (auto& t : pool) t.join();
  }

  LossGradient<T> out;
  out.grad = std::move(partial[0]);
  T total = sse[0];
  for (std::size_t c = 1; c < n_chunks; ++c) {
    for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] += partial[c][i];
    total += sse[c];
  }
  const T inv = T(1) / static_cast<T>(batch);
  for (auto& g : out.grad) g *= inv;
  out.loss = total * inv;
  return out;
}

template <typename T>
TrainState<T> TrainState<T>::for_model(const LayerModel<T>& model, const AdamConfig& adam) {
  TrainState s;
  s.adam = adam;
  s.m.assign(model.params.size(), T(0));
  s.v.assign(model.params.size(), T(0));
  return s;
}

template <typename T>
void adam_step(TrainState<T>& state, LayerModel<T>& model, std::span<const T> grad) {
  require_input(grad.size() == model.params.size() && state.m.size() == model.params.size() &&
                    state.v.size() == model.params.size(),
                "Adam state, gradient and parameters must share one shape");
  state.step += 1;
  const double b1 = state.adam.beta1;
  const double b2 = state.adam.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  const T lr = static_cast<T>(state.adam.learning_rate);
  const T eps = static_cast<T>(state.adam.epsilon);
  const T tb1 = static_cast<T>(b1), tb2 = static_cast<T>(b2);
  const T inv_c1 = static_cast<T>(1.0 / c1), inv_c2 = static_cast<T>(1.0 / c2);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const T g = grad[i];
    state.m[i] = tb1 * state.m[i] + (T(1) - tb1) * g;
    state.v[i] = tb2 * state.v[i] + (T(1) - tb2) * g * g;
    const T m_hat = state.m[i] * inv_c1;
    const T v_hat = state.v[i] * inv_c2;
    model.params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

template struct LayerModel<float>;
template struct LayerModel<double>;
template LayerModel<float> convert<float>(const LayerModel<float>&);
template LayerModel<double> convert<double>(const LayerModel<float>&);
template std::vector<float> forward<float>(const LayerModel<float>&, std::span<const float>);
template std::vector<double> forward<double>(const LayerModel<double>&, std::span<const double>);
template LossGradient<float> backward<float>(const LayerModel<float>&, std::span<const float>, std::span<const float>,
                                             int, std::size_t);
template LossGradient<double> backward<double>(const LayerModel<double>&, std::span<const double>,
                                               std::span<const double>, int, std::size_t);
template struct TrainState<float>;
template struct TrainState<double>;
template void adam_step<float>(TrainState<float>&, LayerModel<float>&, std::span<const float>);
template void adam_step<double>(TrainState<double>&, LayerModel<double>&, std::span<const double>);

}  // namespace understory
