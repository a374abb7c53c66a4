#pragma once

#include <string>

#include "cdpkit/arch.hpp"

namespace cdpkit {

/// Parses the JSON architecture format:
///   {"name": ..., "input": [w, h, c],
///    "layers": [{"kind", "k", "c", "n", "stride", "pad", "t", "alpha",
///                "r1", "r2", "r", "act", "inner_act", "group"}, ...],
///    "pools": [1-based layer indices]}
/// Throws ParseError (with line/column for syntax errors).
ArchSpec arch_from_json(const std::string& text);

std::string arch_to_json(const ArchSpec& arch);

/// A built-in name ("l2net", "superpoint") or a path to a JSON file.
ArchSpec load_arch(const std::string& name_or_path);

}  // namespace cdpkit
