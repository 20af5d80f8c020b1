#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mpbnn/experiment.hpp"
#include "mpbnn/moments.hpp"
#include "mpbnn/objective.hpp"
#include "mpbnn/variational.hpp"

namespace mpbnn {

/// Derivatives of the training loss with respect to every learnable,
/// interleaved to match ParameterStore: values[2j] = d/d mu_j,
/// values[2j+1] = d/d rho_j.
struct Gradient {
  Eigen::VectorXd values;
};

/// Everything that pins down one evaluation of the training loss:
/// batch, targets, KL weight, prior, and the fixed standard-normal draws
/// for the reparameterized KL term (one column per MC sample).
struct LossContext {
  Eigen::VectorXd x;
  Eigen::VectorXd y;
  double alpha = 1.0;
  SpikeSlabPrior prior;
  Eigen::MatrixXd kl_eps;  // [store size, n_samples]
};

/// Recorded forward pass of the scalar training loss: per-layer moment
/// caches plus the loss pieces, sufficient for one reverse sweep.
struct Tape {
  struct LinearCache {
    std::size_t layer_index;
    Eigen::Index param_offset;  // store index of the layer's first weight
    MomentTensor input;
  };
  struct ActivationCache {
    MomentTensor input;
  };

  LossContext ctx;
  std::vector<LinearCache> linears;
  std::vector<ActivationCache> activations;  // one per hidden transition
  MomentTensor net_output;
  PredictiveDistribution pred;
  LossBreakdown loss;
};

/// Scalar leaky-ReLU rule with its 2x2 jacobian. Derivatives through the
/// alpha clamp are zero in the saturated region; the degenerate branch
/// propagates only the scalar slope through the mean.
struct LeakyReluJacobian {
  double out_mean, out_var;
  double dmean_dmean, dmean_dvar;
  double dvar_dmean, dvar_dvar;
};
LeakyReluJacobian leaky_relu_moment_jacobian(double mean, double var,
                                             double slope);

/// Adjoint of expected_nll with respect to predictive mean and total
/// variance: d/dmean = (mean - y)/var, d/dvar = (1/var - r^2/var^2)/2.
void nll_adjoint(const PredictiveDistribution& pred,
                 const Eigen::VectorXd& targets, Eigen::VectorXd& d_mean,
                 Eigen::VectorXd& d_var);

/// Records the forward evaluation of alpha*KL + NLL for one batch.
Tape record_loss(Network& net, const LossContext& ctx);

/// Re-runs the recorded computation; bit-identical to tape.loss.total as
/// long as the network parameters are unchanged.
double replay(Network& net, const Tape& tape);

/// Reverse sweep over the tape; exact derivatives for every learnable.
Gradient backward(Network& net, const Tape& tape);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::vector<Eigen::Index> failing;  // learnable indices over tolerance
  bool pass = true;
};

/// Central finite differences (step 1e-5) against backward() for every
/// learnable coordinate. rel error = |a - fd| / max(|a|, |fd|), with
/// differences below the 1e-7 absolute floor accepted outright.
GradCheckReport grad_check(Network& net, const LossContext& ctx,
                           double tolerance);

/// Same comparison against a caller-supplied gradient (lets a corrupted
/// gradient exercise the detector).
GradCheckReport grad_check_against(Network& net, const LossContext& ctx,
                                   double tolerance, const Gradient& analytic);

/// Randomizes `net` into a well-conditioned regime and draws a batch and
/// KL sample whose pre-activation alphas stay away from the clamp
/// boundary and whose weight draws avoid the spike prior's high-curvature
/// neighborhood, keeping finite differences meaningful.
LossContext make_gradcheck_context(Network& net, int batch,
                                   std::uint64_t seed);

/// Standalone adjoints for the convolution and pooling moment rules
/// (gradients with respect to the parameters' posterior mean/variance).
struct ConvAdjoint {
  MomentTensor d_input;
  Eigen::ArrayXd d_weight_mean, d_weight_var;
  Eigen::ArrayXd d_bias_mean, d_bias_var;
};
ConvAdjoint conv2d_backward(const Conv2dLayer& layer, const MomentTensor& input,
                            const Eigen::ArrayXd& d_out_mean,
                            const Eigen::ArrayXd& d_out_var);

MomentTensor avgpool2d_backward(const AvgPool2dLayer& layer,
                                const MomentTensor& input,
                                const Eigen::ArrayXd& d_out_mean,
                                const Eigen::ArrayXd& d_out_var);

}  // namespace mpbnn
