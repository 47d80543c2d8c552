#pragma once

#include <stdexcept>
#include <string>

namespace srd {

/// S: specimen edge in input voxels; R: voxels per edge after resolution
/// coarsening; D: elements per edge; adap: adaptive coarsening steps.
struct CaseId {
    int S = 0;
    int R = 0;
    int D = 0;
    int adap = 0;

    bool operator==(const CaseId&) const = default;
};

class CaseNameError : public std::invalid_argument {
public:
    CaseNameError(const std::string& msg, std::size_t position);
    std::size_t position() const { return position_; }

private:
    std::size_t position_;
};

/// Grammar: SRD<n> | S<n>[-R<n>][-D<n> | -RD<n>], optionally followed by
/// adap<n>. Omitted R defaults to S, omitted D to R.
CaseId parse_case_name(const std::string& name);

/// Shortest name that parses back to the same tuple.
std::string format_case_name(const CaseId& id);

}  // namespace srd
