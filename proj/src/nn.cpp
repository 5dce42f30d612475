#include "failband/nn.hpp"

#include "failband/rng.hpp"

#include <cmath>

namespace failband::nn {

namespace {

double activate(Activation a, double x) {
    switch (a) {
    case Activation::SmoothRelu: return x / (1.0 + std::exp(-x));
    case Activation::Tanh: return std::tanh(x);
    case Activation::Identity: return x;
    }
    return x;
}

double activate_grad(Activation a, double x) {
    switch (a) {
    case Activation::SmoothRelu: {
        double s = 1.0 / (1.0 + std::exp(-x));
        return s + x * s * (1.0 - s);
    }
    case Activation::Tanh: {
        double t = std::tanh(x);
        return 1.0 - t * t;
    }
    case Activation::Identity: return 1.0;
    }
    return 1.0;
}

} // namespace

size_t Mlp::param_count() const {
    size_t n = 0;
    for (size_t l = 0; l + 1 < layer_dims.size(); ++l)
        n += static_cast<size_t>(layer_dims[l + 1]) * (layer_dims[l] + 1);
    return n;
}

Gradients Gradients::zeros_like(const Mlp& mlp) {
    Gradients g;
    for (size_t l = 0; l < mlp.weights.size(); ++l) {
        g.weights.emplace_back(mlp.weights[l].size(), Vec(mlp.weights[l][0].size(), 0.0));
        g.biases.emplace_back(mlp.biases[l].size(), 0.0);
    }
    return g;
}

void Gradients::scale(double c) {
    for (auto& w : weights)
        for (auto& row : w)
            for (double& v : row) v *= c;
    for (auto& b : biases)
        for (double& v : b) v *= c;
}

void Gradients::add(const Gradients& other) {
    for (size_t l = 0; l < weights.size(); ++l) {
        for (size_t i = 0; i < weights[l].size(); ++i)
            for (size_t j = 0; j < weights[l][i].size(); ++j)
                weights[l][i][j] += other.weights[l][i][j];
        for (size_t i = 0; i < biases[l].size(); ++i) biases[l][i] += other.biases[l][i];
    }
}

AdamState AdamState::init(const Mlp& mlp, double lr) {
    AdamState s;
    s.lr = lr;
    for (size_t l = 0; l < mlp.weights.size(); ++l) {
        s.m_w.emplace_back(mlp.weights[l].size(), Vec(mlp.weights[l][0].size(), 0.0));
        s.v_w.emplace_back(mlp.weights[l].size(), Vec(mlp.weights[l][0].size(), 0.0));
        s.m_b.emplace_back(mlp.biases[l].size(), 0.0);
        s.v_b.emplace_back(mlp.biases[l].size(), 0.0);
    }
    return s;
}

Mlp init_mlp(const std::vector<int>& layer_dims, Activation activation, uint64_t seed) {
    if (layer_dims.size() < 2) throw ConfigError("init_mlp needs at least 2 layer dims");
    for (int d : layer_dims)
        if (d <= 0) throw ConfigError("layer dims must be positive");
    Mlp mlp;
    mlp.layer_dims = layer_dims;
    mlp.activation = activation;
    Rng rng(seed);
    for (size_t l = 0; l + 1 < layer_dims.size(); ++l) {
        int fan_in = layer_dims[l];
        int fan_out = layer_dims[l + 1];
        double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Mat w(fan_out, Vec(fan_in));
        for (auto& row : w)
            for (double& v : row) v = rng.uniform(-scale, scale);
        mlp.weights.push_back(std::move(w));
        mlp.biases.emplace_back(fan_out, 0.0);
    }
    return mlp;
}

Vec forward_cached(const Mlp& mlp, const Vec& x, ForwardCache& cache) {
    if (static_cast<int>(x.size()) != mlp.input_dim())
        throw NumericError("forward: input dim " + std::to_string(x.size()) + " != " +
                           std::to_string(mlp.input_dim()));
    size_t n_layers = mlp.weights.size();
    cache.inputs.assign(n_layers + 1, Vec{});
    cache.pre.assign(n_layers, Vec{});
    cache.inputs[0] = x;
    for (size_t l = 0; l < n_layers; ++l) {
        const Mat& w = mlp.weights[l];
        const Vec& b = mlp.biases[l];
        const Vec& in = cache.inputs[l];
        Vec z(w.size());
        for (size_t i = 0; i < w.size(); ++i) {
            double acc = b[i];
            const Vec& row = w[i];
            for (size_t j = 0; j < row.size(); ++j) acc += row[j] * in[j];
            z[i] = acc;
        }
        cache.pre[l] = z;
        bool last = (l + 1 == n_layers);
        Vec& out = cache.inputs[l + 1];
        out.resize(z.size());
        for (size_t i = 0; i < z.size(); ++i)
            out[i] = last ? z[i] : activate(mlp.activation, z[i]);
    }
    return cache.inputs.back();
}

Vec forward(const Mlp& mlp, const Vec& x) {
    ForwardCache cache;
    return forward_cached(mlp, x, cache);
}

void backward(const Mlp& mlp, const ForwardCache& cache, const Vec& output_grad,
              Gradients& acc, Vec* input_grad) {
    size_t n_layers = mlp.weights.size();
    Vec delta = output_grad; // dL/d(post-activation of current layer)
    for (size_t li = n_layers; li-- > 0;) {
        const Mat& w = mlp.weights[li];
        const Vec& in = cache.inputs[li];
        bool last = (li + 1 == n_layers);
        // dL/d(pre-activation)
        Vec dz(delta.size());
        for (size_t i = 0; i < delta.size(); ++i)
            dz[i] = last ? delta[i] : delta[i] * activate_grad(mlp.activation, cache.pre[li][i]);
        for (size_t i = 0; i < dz.size(); ++i) {
            acc.biases[li][i] += dz[i];
            Vec& grow = acc.weights[li][i];
            for (size_t j = 0; j < in.size(); ++j) grow[j] += dz[i] * in[j];
        }
        if (li > 0 || input_grad) {
            Vec prev(in.size(), 0.0);
            for (size_t i = 0; i < dz.size(); ++i) {
                const Vec& row = w[i];
                for (size_t j = 0; j < row.size(); ++j) prev[j] += dz[i] * row[j];
            }
            if (li == 0) {
                if (input_grad) *input_grad = std::move(prev);
            } else {
                delta = std::move(prev);
            }
        }
    }
}

double loss_and_grad(const Mlp& mlp, const Mat& batch_inputs, const Mat& batch_targets,
                     Loss loss, Gradients& grads) {
    (void)loss; // only MSE for now
    if (batch_inputs.size() != batch_targets.size() || batch_inputs.empty())
        throw NumericError("loss_and_grad: batch shape mismatch");
    grads = Gradients::zeros_like(mlp);
    double total = 0.0;
    double inv_n = 1.0 / static_cast<double>(batch_inputs.size());
    ForwardCache cache;
    for (size_t k = 0; k < batch_inputs.size(); ++k) {
        const Vec& y = batch_targets[k];
        Vec out = forward_cached(mlp, batch_inputs[k], cache);
        if (out.size() != y.size()) throw NumericError("loss_and_grad: target dim mismatch");
        Vec og(out.size());
        for (size_t i = 0; i < out.size(); ++i) {
            double e = out[i] - y[i];
            total += e * e;
            og[i] = 2.0 * e * inv_n;
        }
        backward(mlp, cache, og, grads);
    }
    return total * inv_n;
}

void adam_step(Mlp& mlp, const Gradients& grads, AdamState& state) {
    if (grads.weights.size() != mlp.weights.size())
        throw NumericError("adam_step: gradient shape mismatch");
    state.step += 1;
    double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    auto update = [&](double& p, double g, double& m, double& v) {
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v + (1.0 - state.beta2) * g * g;
        double mhat = m / bc1;
        double vhat = v / bc2;
        p -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    };
    for (size_t l = 0; l < mlp.weights.size(); ++l) {
        for (size_t i = 0; i < mlp.weights[l].size(); ++i) {
            if (grads.weights[l][i].size() != mlp.weights[l][i].size())
                throw NumericError("adam_step: gradient shape mismatch");
            for (size_t j = 0; j < mlp.weights[l][i].size(); ++j)
                update(mlp.weights[l][i][j], grads.weights[l][i][j], state.m_w[l][i][j],
                       state.v_w[l][i][j]);
        }
        for (size_t i = 0; i < mlp.biases[l].size(); ++i)
            update(mlp.biases[l][i], grads.biases[l][i], state.m_b[l][i], state.v_b[l][i]);
    }
}

} // namespace failband::nn
