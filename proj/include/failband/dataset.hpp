#pragma once

#include "failband/types.hpp"

#include <iosfwd>
#include <string>

namespace failband {

/// Newline-delimited format: a JSON header line with the shape parameters,
/// then one rollout per line. Doubles are emitted with round-trip precision,
/// so save/load is bit-exact.
Dataset load_rollouts(const std::string& path);
void save_rollouts(const Dataset& dataset, const std::string& path);

Dataset load_rollouts(std::istream& in, const std::string& name = "<stream>");
void save_rollouts(const Dataset& dataset, std::ostream& out);

/// Checks the per-rollout invariants against the header; throws DataError.
void validate(const Dataset& dataset);

} // namespace failband
