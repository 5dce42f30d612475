#pragma once

#include "failband/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace failband::nn {

enum class Activation : uint8_t {
    SmoothRelu = 0, // x * sigmoid(x)
    Tanh = 1,
    Identity = 2,
};

/// Fully connected net; hidden layers share one activation, output is linear.
struct Mlp {
    std::vector<int> layer_dims;
    std::vector<Mat> weights; // weights[l] is (dims[l+1] x dims[l])
    std::vector<Vec> biases;
    Activation activation = Activation::SmoothRelu;

    int input_dim() const { return layer_dims.front(); }
    int output_dim() const { return layer_dims.back(); }
    size_t param_count() const;
};

struct Gradients {
    std::vector<Mat> weights;
    std::vector<Vec> biases;

    static Gradients zeros_like(const Mlp& mlp);
    void scale(double c);
    void add(const Gradients& other);
};

struct AdamState {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::vector<Mat> m_w, v_w;
    std::vector<Vec> m_b, v_b;
    long step = 0;

    static AdamState init(const Mlp& mlp, double lr);
};

/// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
Mlp init_mlp(const std::vector<int>& layer_dims, Activation activation, uint64_t seed);

Vec forward(const Mlp& mlp, const Vec& x);

/// Per-layer intermediates from one forward pass, consumed by backward().
struct ForwardCache {
    std::vector<Vec> inputs; // inputs[l]: input to layer l; inputs.back() is the output
    std::vector<Vec> pre;    // pre-activation of each layer
};

Vec forward_cached(const Mlp& mlp, const Vec& x, ForwardCache& cache);

/// Reverse pass for an arbitrary dL/d(output); accumulates parameter grads
/// into `acc` and optionally returns dL/d(input).
void backward(const Mlp& mlp, const ForwardCache& cache, const Vec& output_grad,
              Gradients& acc, Vec* input_grad = nullptr);

enum class Loss { Mse };

/// loss = mean over batch of squared error summed over output dims.
double loss_and_grad(const Mlp& mlp, const Mat& batch_inputs, const Mat& batch_targets,
                     Loss loss, Gradients& grads);

void adam_step(Mlp& mlp, const Gradients& grads, AdamState& state);

} // namespace failband::nn
