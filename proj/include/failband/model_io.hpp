#pragma once

#include "failband/nn.hpp"

#include <iosfwd>
#include <string>

namespace failband {

struct Normalizer {
    Vec mean;
    Vec std; // strictly positive per dimension

    Vec apply(const Vec& x) const;
    static Normalizer fit(const Mat& rows);
    static Normalizer identity(int dim);
};

namespace io {

// Binary container: magic "FBND", version u32, then one typed payload.
inline constexpr uint32_t kFormatVersion = 1;

enum class ModelKind : uint8_t {
    Mlp = 0,
    Flow = 1,
    Rnd = 2,
    PcaKmeans = 3,
    Cfm = 4,
};

void write_mlp(std::ostream& out, const nn::Mlp& mlp);
nn::Mlp read_mlp(std::istream& in);

void write_normalizer(std::ostream& out, const Normalizer& n);
Normalizer read_normalizer(std::istream& in);

void write_vec(std::ostream& out, const Vec& v);
Vec read_vec(std::istream& in);
void write_mat(std::ostream& out, const Mat& m);
Mat read_mat(std::istream& in);

void write_header(std::ostream& out, ModelKind kind);
ModelKind read_header(std::istream& in);

/// Opens the file and checks magic/kind; throws DataError on mismatch.
std::ifstream open_model(const std::string& path, ModelKind expected);
std::ofstream create_model(const std::string& path, ModelKind kind);

} // namespace io

} // namespace failband
