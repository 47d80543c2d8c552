#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "srd/cases.hpp"
#include "srd/errors.hpp"
#include "srd/homog.hpp"

namespace srd {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct InputSpec {
    enum class Kind { synthetic, raw_u8, csv_slices };
    Kind kind = Kind::synthetic;
    std::filesystem::path path;
    int dim = 2;
    std::array<int, 3> extents{32, 32, 1};
    double spacing = 0.1;  // mm
    synthetic::Spec generator = synthetic::Random{};
};

enum class ResolutionRule { mixture, majority };
enum class ErrorStage { off, estimate, actual };

struct SweepConfig {
    InputSpec input;
    PhaseTable table = PhaseTable::concrete();
    std::vector<CaseId> cases;
    ResolutionRule rule = ResolutionRule::majority;
    std::vector<BoundaryCondition> bcs{BoundaryCondition::kubc, BoundaryCondition::pbc, BoundaryCondition::subc};
    std::optional<std::array<int, 3>> origin;  // empty: centered subvolumes
    std::optional<bool> preserve_boundary;     // empty: only under PBC
    Eigen::VectorXd macro_strain;              // load for the error stage
    ErrorStage errors = ErrorStage::estimate;
    int ref_factor = 4;
    long max_ndof = 2000000;
    int threads = 1;
    bool vtk = false;
    bool timing = false;
    std::optional<std::pair<CaseId, BoundaryCondition>> reference;
    std::filesystem::path out_dir = "out";
};

/// INI-style file; see README for the keys.
SweepConfig parse_config(std::istream& in);
SweepConfig load_config(const std::filesystem::path& path);
/// Applies a new seed to a synthetic input.
void override_seed(SweepConfig& config, std::uint64_t seed);
/// Checks S/R/D/ref-factor constraints against the input extents.
void validate_config(const SweepConfig& config);

VoxelGrid load_input(const SweepConfig& config);

/// A case after the R and D transforms, ready to solve.
struct PreparedCase {
    CaseId id;
    VoxelGrid grid;    // subvolume at resolution R
    PhaseTable table;  // may hold mixed phases
    Mesh uniform;      // D elements per edge
    Mesh mesh;         // after adaptive coarsening
    CoarseningReport report;
};

PreparedCase prepare_case(const VoxelGrid& input, const SweepConfig& config, const CaseId& id, BoundaryCondition bc);

struct CaseRecord {
    std::string case_name;
    BoundaryCondition bc = BoundaryCondition::pbc;
    std::string status = "ok";
    std::optional<HomogenizationResult> result;
    std::optional<ErrorReport> errors;
    double reduction_factor = 1.0;
    std::map<std::string, double> fractions;  // "0", "1", ..., "mixed"
    std::vector<double> deviation_percent;     // against the reference row, when configured
    std::optional<double> seconds;
};

/// Result of one case under one BC; failures are recorded in `status`.
CaseRecord run_case(const VoxelGrid& input, const SweepConfig& config, const CaseId& id, BoundaryCondition bc);

std::vector<CaseRecord> run_sweep(const SweepConfig& config);

/// results.csv and results.json in `dir`.
void emit_tables(const std::vector<CaseRecord>& records, const std::filesystem::path& dir);
void write_csv(const std::vector<CaseRecord>& records, std::ostream& out);
std::string records_json(const std::vector<CaseRecord>& records);

/// Legacy VTK unstructured grid with per-cell arrays.
struct CellArray {
    std::string name;
    std::vector<double> values;
    bool integer = false;
};
void write_vtk(const std::filesystem::path& path, const Mesh& mesh, const std::vector<CellArray>& cell_data,
               const Eigen::VectorXd* displacements = nullptr);

/// "%.6g"
std::string format_number(double v);

}  // namespace srd
