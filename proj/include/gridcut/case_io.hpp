#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "gridcut/network.hpp"

namespace gridcut {

enum class CaseFormat { Matpower, NativeJson };

/// Parses case text into a validated, balanced network.
///
/// MATPOWER mapping: `mpc.bus` rows give buses (column 1 label, column 3 Pd
/// becomes a load when positive); `mpc.gen` rows with status > 0 give
/// generators (Pg, Pmax, Pmin); `mpc.branch` rows give branches with
/// susceptance 1/(x*tap) and rating rateA (a zero rating is an error);
/// `mpc.gencost` polynomial rows map to (a, b, c). Phase shifts, shunts and
/// reactive data are ignored.
Network parse_case(std::string_view text, CaseFormat format);

/// Reads a case file, choosing the format from the extension (.json is native,
/// anything else is MATPOWER text).
Network load_case(const std::filesystem::path& path);

/// Native JSON form of a network; parse_case(serialize_case(n), NativeJson)
/// reproduces n.
std::string serialize_case(const Network& net);

}  // namespace gridcut
