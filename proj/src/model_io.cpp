#include "failband/model_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace failband {

Vec Normalizer::apply(const Vec& x) const {
    if (x.size() != mean.size()) throw NumericError("normalizer: dim mismatch");
    Vec out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean[i]) / std[i];
    return out;
}

Normalizer Normalizer::fit(const Mat& rows) {
    if (rows.empty()) throw DataError("normalizer: no data");
    size_t d = rows[0].size();
    Normalizer n;
    n.mean.assign(d, 0.0);
    n.std.assign(d, 0.0);
    for (const auto& r : rows)
        for (size_t i = 0; i < d; ++i) n.mean[i] += r[i];
    for (size_t i = 0; i < d; ++i) n.mean[i] /= static_cast<double>(rows.size());
    for (const auto& r : rows)
        for (size_t i = 0; i < d; ++i) {
            double e = r[i] - n.mean[i];
            n.std[i] += e * e;
        }
    bool any_positive = false;
    for (size_t i = 0; i < d; ++i) {
        n.std[i] = std::sqrt(n.std[i] / static_cast<double>(rows.size()));
        if (n.std[i] > 0.0) any_positive = true;
        if (n.std[i] <= 0.0) n.std[i] = 1.0; // constant dim: pass through centered
    }
    if (!any_positive) throw DataError("normalizer: zero variance in every dimension");
    return n;
}

Normalizer Normalizer::identity(int dim) {
    Normalizer n;
    n.mean.assign(dim, 0.0);
    n.std.assign(dim, 1.0);
    return n;
}

namespace io {

namespace {

// Parameters are written as little-endian f64. This codebase only targets
// little-endian hosts; assert at compile time via a runtime check on load.

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataError("model file truncated");
    return v;
}

} // namespace

void write_vec(std::ostream& out, const Vec& v) {
    put<uint64_t>(out, v.size());
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

Vec read_vec(std::istream& in) {
    uint64_t n = get<uint64_t>(in);
    if (n > (1ULL << 32)) throw DataError("model file corrupt: oversized vector");
    Vec v(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw DataError("model file truncated");
    return v;
}

void write_mat(std::ostream& out, const Mat& m) {
    put<uint64_t>(out, m.size());
    for (const auto& row : m) write_vec(out, row);
}

Mat read_mat(std::istream& in) {
    uint64_t n = get<uint64_t>(in);
    if (n > (1ULL << 32)) throw DataError("model file corrupt: oversized matrix");
    Mat m(n);
    for (auto& row : m) row = read_vec(in);
    return m;
}

void write_mlp(std::ostream& out, const nn::Mlp& mlp) {
    put<uint8_t>(out, static_cast<uint8_t>(mlp.activation));
    put<uint32_t>(out, static_cast<uint32_t>(mlp.layer_dims.size()));
    for (int d : mlp.layer_dims) put<uint32_t>(out, static_cast<uint32_t>(d));
    for (size_t l = 0; l < mlp.weights.size(); ++l) {
        for (const auto& row : mlp.weights[l])
            out.write(reinterpret_cast<const char*>(row.data()),
                      static_cast<std::streamsize>(row.size() * sizeof(double)));
        out.write(reinterpret_cast<const char*>(mlp.biases[l].data()),
                  static_cast<std::streamsize>(mlp.biases[l].size() * sizeof(double)));
    }
}

nn::Mlp read_mlp(std::istream& in) {
    nn::Mlp mlp;
    mlp.activation = static_cast<nn::Activation>(get<uint8_t>(in));
    uint32_t n_dims = get<uint32_t>(in);
    if (n_dims < 2 || n_dims > 64) throw DataError("model file corrupt: bad layer count");
    mlp.layer_dims.resize(n_dims);
    for (auto& d : mlp.layer_dims) d = static_cast<int>(get<uint32_t>(in));
    for (size_t l = 0; l + 1 < mlp.layer_dims.size(); ++l) {
        Mat w(mlp.layer_dims[l + 1], Vec(mlp.layer_dims[l]));
        for (auto& row : w) {
            in.read(reinterpret_cast<char*>(row.data()),
                    static_cast<std::streamsize>(row.size() * sizeof(double)));
        }
        Vec b(mlp.layer_dims[l + 1]);
        in.read(reinterpret_cast<char*>(b.data()),
                static_cast<std::streamsize>(b.size() * sizeof(double)));
        if (!in) throw DataError("model file truncated");
        mlp.weights.push_back(std::move(w));
        mlp.biases.push_back(std::move(b));
    }
    return mlp;
}

void write_normalizer(std::ostream& out, const Normalizer& n) {
    write_vec(out, n.mean);
    write_vec(out, n.std);
}

Normalizer read_normalizer(std::istream& in) {
    Normalizer n;
    n.mean = read_vec(in);
    n.std = read_vec(in);
    if (n.mean.size() != n.std.size()) throw DataError("model file corrupt: normalizer");
    return n;
}

void write_header(std::ostream& out, ModelKind kind) {
    out.write("FBND", 4);
    put<uint32_t>(out, kFormatVersion);
    put<uint8_t>(out, static_cast<uint8_t>(kind));
}

ModelKind read_header(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "FBND", 4) != 0)
        throw DataError("not a model file (bad magic)");
    uint32_t version = get<uint32_t>(in);
    if (version != kFormatVersion)
        throw DataError("unsupported model file version " + std::to_string(version));
    return static_cast<ModelKind>(get<uint8_t>(in));
}

std::ifstream open_model(const std::string& path, ModelKind expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open model file '" + path + "'");
    ModelKind kind = read_header(in);
    if (kind != expected)
        throw DataError("model file '" + path + "' holds a different model kind");
    return in;
}

std::ofstream create_model(const std::string& path, ModelKind kind) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write model file '" + path + "'");
    write_header(out, kind);
    return out;
}

} // namespace io

} // namespace failband
