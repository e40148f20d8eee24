#pragma once

#include <string>

#include "difflens/losses.hpp"
#include "difflens/system.hpp"

namespace difflens {

struct ParseError : Error {
    ParseError(int line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_number(line) {}
    int line_number;
};

/// A parsed lens document: the system plus the per-parameter trainable flags.
struct Prescription {
    LensSystem system;
    ParamVector params;
};

/// Plain-text key = value blocks: one [system] block followed by ordered
/// [surface] blocks. Unknown keys are rejected with their line number.
Prescription parse_prescription(const std::string& text);
Prescription load_prescription(const std::string& path);

std::string emit_prescription(const LensSystem& system, const ParamVector& params);
void save_prescription(const LensSystem& system, const ParamVector& params,
                       const std::string& path);

/// [design] block with the optimization targets.
DesignSpec parse_design_spec(const std::string& text);
DesignSpec load_design_spec(const std::string& path);
std::string emit_design_spec(const DesignSpec& spec);

} // namespace difflens
