#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcnet/neighbor_index.hpp"

namespace mcnet {

// N points with positions in meters and colors normalized to [0, 1].
struct PointCloud {
    std::vector<double> positions;  // [N,3]
    std::vector<double> colors;     // [N,3]
    std::optional<std::vector<int>> labels;
    std::size_t num_classes = 0;
    std::vector<std::string> class_names;  // optional; empty or num_classes long

    std::size_t size() const { return positions.size() / 3; }
    bool has_labels() const { return labels.has_value(); }

    // Throws ContractError when an invariant does not hold.
    void validate() const;

    // Points at the given ids, in that order; labels and class names carried.
    PointCloud subset(std::span<const PointId> ids) const;

    std::string class_name(std::size_t c) const;
};

enum class Geometry { plane, box, cylinder, scatter };

struct ClassSpec {
    std::string name;
    std::size_t point_count = 0;
    Geometry geometry = Geometry::scatter;
    std::array<double, 3> center{0, 0, 0};
    // plane: x/y side lengths; box and scatter: side lengths; cylinder:
    // diameter in x, height in z.
    std::array<double, 3> extent{1, 1, 1};
    std::array<double, 3> color_mean{0.5, 0.5, 0.5};
    double color_jitter = 0.0;
    double noise_sigma = 0.0;
};

struct SceneSpec {
    std::vector<ClassSpec> classes;
    std::uint64_t seed = 0;

    void validate() const;
    static SceneSpec from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

PointCloud parse_ply(std::istream& in);
PointCloud load_ply(const std::filesystem::path& path);

// ASCII PLY. Positions are written with round-trip precision, colors as
// 0-255 bytes; `predicted`, when nonempty, becomes a `pred` property.
void write_ply(std::ostream& out, const PointCloud& cloud, std::span<const int> predicted = {});
void save_ply(const PointCloud& cloud, const std::filesystem::path& path,
              std::span<const int> predicted = {});

// Deterministic for a given spec. Points are emitted class by class and
// colors are quantized to the 1/255 grid used on disk.
PointCloud synth_scene(const SceneSpec& spec);

std::vector<double> class_frequencies(const PointCloud& cloud);

}  // namespace mcnet
