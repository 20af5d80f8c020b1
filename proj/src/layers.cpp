#include "mpbnn/layers.hpp"

#include <cmath>
#include <sstream>

#include "mpbnn/errors.hpp"

namespace mpbnn {

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double logistic(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                  : std::exp(x) / (1.0 + std::exp(x));
}

double GaussianParameter::sigma() const { return softplus(rho); }

double GaussianParameter::variance() const {
  const double s = sigma();
  return s * s;
}

namespace {

[[noreturn]] void shape_mismatch(const char* op,
                                 const std::vector<Eigen::Index>& expected,
                                 const std::vector<Eigen::Index>& actual) {
  std::ostringstream msg;
  msg << op << ": expected input shape [";
  for (std::size_t i = 0; i < expected.size(); ++i)
    msg << (i ? ", " : "") << expected[i];
  msg << "], got [";
  for (std::size_t i = 0; i < actual.size(); ++i)
    msg << (i ? ", " : "") << actual[i];
  msg << "]";
  throw ShapeError(msg.str());
}

Eigen::MatrixXd param_matrix(const std::vector<GaussianParameter>& p,
                             Eigen::Index rows, Eigen::Index cols, bool var) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      const GaussianParameter& g = p[static_cast<std::size_t>(r * cols + c)];
      m(r, c) = var ? g.variance() : g.mu;
    }
  return m;
}

}  // namespace

LinearLayer LinearLayer::make(Eigen::Index in_features,
                              Eigen::Index out_features) {
  if (in_features <= 0 || out_features <= 0)
    throw ConfigError("LinearLayer: feature counts must be positive");
  LinearLayer l;
  l.in_features = in_features;
  l.out_features = out_features;
  l.weights.resize(static_cast<std::size_t>(in_features * out_features));
  l.biases.resize(static_cast<std::size_t>(out_features));
  return l;
}

void LinearLayer::validate() const {
  if (weights.size() != static_cast<std::size_t>(in_features * out_features) ||
      biases.size() != static_cast<std::size_t>(out_features))
    throw ShapeError("LinearLayer: parameter arrays do not match dimensions");
}

Eigen::MatrixXd LinearLayer::weight_mean() const {
  return param_matrix(weights, out_features, in_features, false);
}
Eigen::MatrixXd LinearLayer::weight_var() const {
  return param_matrix(weights, out_features, in_features, true);
}
Eigen::VectorXd LinearLayer::bias_mean() const {
  return param_matrix(biases, out_features, 1, false);
}
Eigen::VectorXd LinearLayer::bias_var() const {
  return param_matrix(biases, out_features, 1, true);
}

MomentTensor linear_forward(const LinearLayer& layer,
                            const MomentTensor& input) {
  layer.validate();
  if (input.shape.size() != 2 || input.shape[1] != layer.in_features)
    shape_mismatch("linear_forward", {-1, layer.in_features}, input.shape);
  input.validate();

  const Eigen::Index batch = input.shape[0];
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                               Eigen::RowMajor>;
  Eigen::Map<const RowMat> x_mean(input.mean.data(), batch, layer.in_features);
  Eigen::Map<const RowMat> x_var(input.var.data(), batch, layer.in_features);

  const Eigen::MatrixXd w_mean = layer.weight_mean();
  const Eigen::MatrixXd w_var = layer.weight_var();

  RowMat y_mean = x_mean * w_mean.transpose();
  y_mean.rowwise() += layer.bias_mean().transpose();

  // V[a'] = V[b] + sum_i V[a]V[w] + V[a]E[w]^2 + E[a]^2 V[w]
  const Eigen::MatrixXd w_vm = w_var + w_mean.cwiseProduct(w_mean);
  RowMat y_var = x_var * w_vm.transpose() +
                 x_mean.cwiseProduct(x_mean) * w_var.transpose();
  y_var.rowwise() += layer.bias_var().transpose();

  MomentTensor out;
  out.shape = {batch, layer.out_features};
  out.mean = Eigen::Map<const Eigen::ArrayXd>(y_mean.data(), y_mean.size());
  out.var = Eigen::Map<const Eigen::ArrayXd>(y_var.data(), y_var.size());
  out.validate();
  return out;
}

namespace {

struct ConvDims {
  Eigen::Index batch, in_c, in_h, in_w, out_c, out_h, out_w;
};

ConvDims conv_dims(const Conv2dLayer& layer, const MomentTensor& input) {
  if (input.shape.size() != 4 || input.shape[1] != layer.in_channels)
    shape_mismatch("conv2d_forward", {-1, layer.in_channels, -1, -1},
                   input.shape);
  ConvDims d;
  d.batch = input.shape[0];
  d.in_c = input.shape[1];
  d.in_h = input.shape[2];
  d.in_w = input.shape[3];
  d.out_c = layer.out_channels;
  d.out_h = (d.in_h + 2 * layer.padding - layer.kernel_height) / layer.stride + 1;
  d.out_w = (d.in_w + 2 * layer.padding - layer.kernel_width) / layer.stride + 1;
  if (d.out_h <= 0 || d.out_w <= 0)
    throw ShapeError("conv2d_forward: non-positive output spatial dims");
  return d;
}

// Cross-correlation of [B,Cin,H,W] with [Cout,Cin,kh,kw], zero padding.
Eigen::ArrayXd conv_core(const Eigen::ArrayXd& in, const Eigen::ArrayXd& w,
                         const Conv2dLayer& layer, const ConvDims& d) {
  Eigen::ArrayXd out = Eigen::ArrayXd::Zero(d.batch * d.out_c * d.out_h * d.out_w);
  const Eigen::Index kh = layer.kernel_height, kw = layer.kernel_width;
  for (Eigen::Index b = 0; b < d.batch; ++b)
    for (Eigen::Index oc = 0; oc < d.out_c; ++oc)
      for (Eigen::Index oy = 0; oy < d.out_h; ++oy)
        for (Eigen::Index ox = 0; ox < d.out_w; ++ox) {
          double acc = 0.0;
          for (Eigen::Index ic = 0; ic < d.in_c; ++ic)
            for (Eigen::Index ky = 0; ky < kh; ++ky)
              for (Eigen::Index kx = 0; kx < kw; ++kx) {
                const Eigen::Index iy = oy * layer.stride - layer.padding + ky;
                const Eigen::Index ix = ox * layer.stride - layer.padding + kx;
                if (iy < 0 || iy >= d.in_h || ix < 0 || ix >= d.in_w) continue;
                const Eigen::Index wky = layer.flip_kernel ? kh - 1 - ky : ky;
                const Eigen::Index wkx = layer.flip_kernel ? kw - 1 - kx : kx;
                acc += in[((b * d.in_c + ic) * d.in_h + iy) * d.in_w + ix] *
                       w[((oc * d.in_c + ic) * kh + wky) * kw + wkx];
              }
          out[((b * d.out_c + oc) * d.out_h + oy) * d.out_w + ox] = acc;
        }
  return out;
}

Eigen::ArrayXd param_array(const std::vector<GaussianParameter>& p, bool var) {
  Eigen::ArrayXd a(static_cast<Eigen::Index>(p.size()));
  for (std::size_t i = 0; i < p.size(); ++i)
    a[static_cast<Eigen::Index>(i)] = var ? p[i].variance() : p[i].mu;
  return a;
}

}  // namespace

Conv2dLayer Conv2dLayer::make(Eigen::Index in_channels,
                              Eigen::Index out_channels,
                              Eigen::Index kernel_height,
                              Eigen::Index kernel_width, Eigen::Index stride,
                              Eigen::Index padding) {
  if (in_channels <= 0 || out_channels <= 0 || kernel_height <= 0 ||
      kernel_width <= 0 || stride <= 0 || padding < 0)
    throw ConfigError("Conv2dLayer: invalid dimensions");
  Conv2dLayer l;
  l.in_channels = in_channels;
  l.out_channels = out_channels;
  l.kernel_height = kernel_height;
  l.kernel_width = kernel_width;
  l.stride = stride;
  l.padding = padding;
  l.weights.resize(static_cast<std::size_t>(in_channels * out_channels *
                                            kernel_height * kernel_width));
  l.biases.resize(static_cast<std::size_t>(out_channels));
  return l;
}

void Conv2dLayer::validate() const {
  if (weights.size() != static_cast<std::size_t>(in_channels * out_channels *
                                                 kernel_height * kernel_width) ||
      biases.size() != static_cast<std::size_t>(out_channels))
    throw ShapeError("Conv2dLayer: parameter arrays do not match dimensions");
}

MomentTensor conv2d_forward(const Conv2dLayer& layer,
                            const MomentTensor& input) {
  layer.validate();
  input.validate();
  const ConvDims d = conv_dims(layer, input);

  const Eigen::ArrayXd w_mean = param_array(layer.weights, false);
  const Eigen::ArrayXd w_var = param_array(layer.weights, true);
  const Eigen::ArrayXd b_mean = param_array(layer.biases, false);
  const Eigen::ArrayXd b_var = param_array(layer.biases, true);

  MomentTensor out;
  out.shape = {d.batch, d.out_c, d.out_h, d.out_w};
  out.mean = conv_core(input.mean, w_mean, layer, d);
  out.var = conv_core(input.var, w_var + w_mean.square(), layer, d) +
            conv_core(input.mean.square(), w_var, layer, d);

  for (Eigen::Index b = 0; b < d.batch; ++b)
    for (Eigen::Index oc = 0; oc < d.out_c; ++oc) {
      const Eigen::Index base = (b * d.out_c + oc) * d.out_h * d.out_w;
      out.mean.segment(base, d.out_h * d.out_w) += b_mean[oc];
      out.var.segment(base, d.out_h * d.out_w) += b_var[oc];
    }
  out.validate();
  return out;
}

MomentTensor avgpool2d_forward(const AvgPool2dLayer& layer,
                               const MomentTensor& input) {
  if (layer.pool_height <= 0 || layer.pool_width <= 0)
    throw ConfigError("avgpool2d_forward: pool dims must be positive");
  if (input.shape.size() != 4)
    shape_mismatch("avgpool2d_forward", {-1, -1, -1, -1}, input.shape);
  input.validate();
  const Eigen::Index batch = input.shape[0], chans = input.shape[1],
                     in_h = input.shape[2], in_w = input.shape[3];
  if (in_h % layer.pool_height != 0 || in_w % layer.pool_width != 0)
    throw ShapeError("avgpool2d_forward: spatial dims not divisible by pool");
  const Eigen::Index out_h = in_h / layer.pool_height;
  const Eigen::Index out_w = in_w / layer.pool_width;
  const double n = static_cast<double>(layer.pool_height * layer.pool_width);

  MomentTensor out = MomentTensor::zeros({batch, chans, out_h, out_w});
  for (Eigen::Index b = 0; b < batch; ++b)
    for (Eigen::Index c = 0; c < chans; ++c)
      for (Eigen::Index oy = 0; oy < out_h; ++oy)
        for (Eigen::Index ox = 0; ox < out_w; ++ox) {
          double m = 0.0, v = 0.0;
          for (Eigen::Index py = 0; py < layer.pool_height; ++py)
            for (Eigen::Index px = 0; px < layer.pool_width; ++px) {
              const Eigen::Index iy = oy * layer.pool_height + py;
              const Eigen::Index ix = ox * layer.pool_width + px;
              const Eigen::Index idx =
                  ((b * chans + c) * in_h + iy) * in_w + ix;
              m += input.mean[idx];
              v += input.var[idx];
            }
          const Eigen::Index o = ((b * chans + c) * out_h + oy) * out_w + ox;
          // mean of independent elements; variance picks up 1/N^2 per
          // element, i.e. the pooled variance times 1/N.
          out.mean[o] = m / n;
          out.var[o] = v / (n * n);
        }
  out.validate();
  return out;
}

std::pair<double, double> leaky_relu_moments(double mean, double var,
                                             double slope) {
  if (slope == 1.0) return {mean, var};  // identity activation, kept exact
  if (var < kDegenerateVariance) {
    const double m = mean < 0.0 ? slope * mean : mean;
    return {m, 0.0};
  }
  const TruncatedNormalStats s = truncated_stats(mean, var);
  const double l = slope;
  const double p = s.prob_below, q = s.prob_above;
  const double out_mean = l * p * s.mean_below + q * s.mean_above;
  const double diff = l * s.mean_below - s.mean_above;
  double out_var =
      l * l * p * s.var_below + q * s.var_above + p * q * diff * diff;
  return {out_mean, std::max(out_var, 0.0)};
}

MomentTensor leaky_relu_forward(const LeakyReluLayer& layer,
                                const MomentTensor& input) {
  if (layer.slope < 0.0)
    throw DomainError("leaky_relu_forward: slope must be non-negative");
  input.validate();
  MomentTensor out = input;
  for (Eigen::Index i = 0; i < input.mean.size(); ++i) {
    const auto [m, v] =
        leaky_relu_moments(input.mean[i], input.var[i], layer.slope);
    out.mean[i] = m;
    out.var[i] = v;
  }
  out.validate();
  return out;
}

}  // namespace mpbnn
