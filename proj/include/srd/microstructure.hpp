#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace srd {

using PhaseId = std::uint16_t;

enum class PhaseKind { solid, pore };

struct Phase {
    PhaseId id = 0;
    double E = 0.0;   // MPa, ignored for pores
    double nu = 0.0;  // ignored for pores
    PhaseKind kind = PhaseKind::solid;
    std::string name;
    // Created by the mixture coarsening rule; never used as a pore reference.
    bool mixed = false;
};

/// Phase id -> elastic constants. Pores keep no constants of their own; they
/// are modelled as a compliant filler with E = ratio * min(E of user solids).
class PhaseTable {
public:
    static constexpr double kDefaultPoreRatio = 1e-6;
    static constexpr double kPoreNu = 0.3;

    PhaseTable() = default;
    explicit PhaseTable(std::vector<Phase> entries, double pore_stiffness_ratio = kDefaultPoreRatio);

    /// Aggregate / mortar / pore with E = 50 and 20 GPa, nu = 0.3 (ids 0, 1, 2).
    static PhaseTable concrete();
    /// Two solid phases with ids 0 and 1.
    static PhaseTable two_phase(double E0, double nu0, double E1, double nu1);

    const std::vector<Phase>& entries() const { return entries_; }
    double pore_stiffness_ratio() const { return pore_ratio_; }

    bool contains(PhaseId id) const;
    const Phase& at(PhaseId id) const;
    double effective_E(PhaseId id) const;
    double effective_nu(PhaseId id) const;
    PhaseId max_id() const;

    /// Appends a mixed solid phase and returns its id; reuses an existing
    /// mixed entry with identical constants.
    PhaseId add_mixed(double E, double nu);

    /// Same table with every solid E multiplied by `factor` (pores follow).
    PhaseTable scaled(double factor) const;

private:
    void validate() const;
    double pore_E() const;

    std::vector<Phase> entries_;
    double pore_ratio_ = kDefaultPoreRatio;
};

using PhaseFractions = std::map<PhaseId, double>;

/// 2d or 3d raster of phase ids, x fastest. 2d grids keep extents[2] == 1.
struct VoxelGrid {
    int dim = 3;
    std::array<int, 3> extents{1, 1, 1};
    double spacing = 1.0;  // mm
    std::vector<PhaseId> data;
    std::string provenance;

    VoxelGrid() = default;
    VoxelGrid(int dim, std::array<int, 3> extents, double spacing, PhaseId fill = 0);

    std::size_t size() const { return data.size(); }
    std::size_t index(int x, int y, int z = 0) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(extents[0]) *
                   (static_cast<std::size_t>(y) + static_cast<std::size_t>(extents[1]) * z);
    }
    PhaseId at(int x, int y, int z = 0) const { return data[index(x, y, z)]; }
    PhaseId& at(int x, int y, int z = 0) { return data[index(x, y, z)]; }

    /// Physical edge length along `axis` in mm.
    double length(int axis) const { return extents[axis] * spacing; }

    /// Throws if the data length or any phase id is inconsistent.
    void validate(const PhaseTable& table) const;
};

enum class VoxelFormat { raw_u8, csv_slices };

VoxelGrid load_voxel_grid(const std::filesystem::path& path, VoxelFormat format, int dim,
                          std::array<int, 3> extents, double spacing, const PhaseTable& table);
void save_raw_u8(const VoxelGrid& grid, const std::filesystem::path& path);

PhaseFractions phase_fractions(const VoxelGrid& grid);

VoxelGrid extract_subvolume(const VoxelGrid& grid, std::array<int, 3> origin, int size);
/// Origin that centres a cube of `size` voxels in the grid.
std::array<int, 3> centered_origin(const VoxelGrid& grid, int size);

enum class Axis { x = 0, y = 1, z = 2 };
VoxelGrid extract_slice(const VoxelGrid& grid, Axis axis, int index);

namespace synthetic {

/// Phase `first` below `fraction * n` along `normal_axis`, `second` above.
struct Laminate {
    int normal_axis = 0;
    double fraction = 0.5;
    PhaseId first = 0;
    PhaseId second = 1;
};

/// Centred sphere (disc in 2d) of `inclusion` in a `matrix`.
struct SphereInclusion {
    double radius_fraction = 0.5;  // of half the smallest extent
    PhaseId matrix = 0;
    PhaseId inclusion = 1;
};

struct Checkerboard {
    int cell = 1;
    PhaseId first = 0;
    PhaseId second = 1;
};

/// Independent voxels: `second` with probability p.
struct Random {
    double p = 0.5;
    std::uint64_t seed = 1;
    PhaseId first = 0;
    PhaseId second = 1;
};

/// Periodic Gaussian-smoothed noise thresholded so that a fraction p of the
/// voxels becomes `second`. `correlation_length` is the smoothing width in voxels.
struct Blobs {
    double p = 0.5;
    std::uint64_t seed = 1;
    double correlation_length = 2.0;
    PhaseId first = 0;
    PhaseId second = 1;
};

using Spec = std::variant<Laminate, SphereInclusion, Checkerboard, Random, Blobs>;

}  // namespace synthetic

VoxelGrid generate_synthetic(const synthetic::Spec& spec, int dim, std::array<int, 3> extents,
                             double spacing);

}  // namespace srd
