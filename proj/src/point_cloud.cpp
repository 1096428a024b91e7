#include "mcnet/point_cloud.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "mcnet/errors.hpp"
#include "mcnet/rng.hpp"

namespace mcnet {

void PointCloud::validate() const {
    if (positions.empty() || positions.size() % 3 != 0) {
        throw ContractError("point cloud needs N >= 1 points with 3 coordinates each");
    }
    if (colors.size() != positions.size()) {
        throw ContractError("point cloud has " + std::to_string(colors.size() / 3) + " colors for " +
                            std::to_string(size()) + " points");
    }
    for (double c : colors) {
        if (!(c >= 0.0 && c <= 1.0)) throw ContractError("color component outside [0,1]: " + std::to_string(c));
    }
    if (labels) {
        if (labels->size() != size()) {
            throw ContractError("point cloud has " + std::to_string(labels->size()) + " labels for " +
                                std::to_string(size()) + " points");
        }
        for (int l : *labels) {
            if (l < 0 || static_cast<std::size_t>(l) >= num_classes) {
                throw ContractError("label " + std::to_string(l) + " outside [0," +
                                    std::to_string(num_classes) + ")");
            }
        }
    }
    if (!class_names.empty() && class_names.size() != num_classes) {
        throw ContractError("class name list does not match num_classes");
    }
}

PointCloud PointCloud::subset(std::span<const PointId> ids) const {
    PointCloud out;
    out.num_classes = num_classes;
    out.class_names = class_names;
    out.positions.reserve(ids.size() * 3);
    out.colors.reserve(ids.size() * 3);
    if (labels) out.labels.emplace().reserve(ids.size());
    for (PointId id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= size()) {
            throw IndexError("subset: point id " + std::to_string(id) + " out of range");
        }
        const auto i = static_cast<std::size_t>(id);
        out.positions.insert(out.positions.end(), positions.begin() + 3 * i, positions.begin() + 3 * i + 3);
        out.colors.insert(out.colors.end(), colors.begin() + 3 * i, colors.begin() + 3 * i + 3);
        if (labels) out.labels->push_back((*labels)[i]);
    }
    return out;
}

std::string PointCloud::class_name(std::size_t c) const {
    return c < class_names.size() ? class_names[c] : "class_" + std::to_string(c);
}

// ---------------------------------------------------------------------------
// Scene specs

namespace {

Geometry parse_geometry(const std::string& s) {
    if (s == "plane") return Geometry::plane;
    if (s == "box") return Geometry::box;
    if (s == "cylinder") return Geometry::cylinder;
    if (s == "scatter") return Geometry::scatter;
    throw ConfigError("unknown geometry '" + s + "' (plane|box|cylinder|scatter)");
}

const char* geometry_name(Geometry g) {
    switch (g) {
        case Geometry::plane: return "plane";
        case Geometry::box: return "box";
        case Geometry::cylinder: return "cylinder";
        case Geometry::scatter: return "scatter";
    }
    return "scatter";
}

std::array<double, 3> triple(const nlohmann::json& j, const char* key, std::array<double, 3> fallback) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != 3) throw ConfigError(std::string(key) + " must be a 3-element array");
    return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
}

}  // namespace

void SceneSpec::validate() const {
    if (classes.size() < 2) throw ConfigError("scene spec needs at least 2 classes");
    for (const auto& c : classes) {
        if (c.point_count < 1) throw ConfigError("class '" + c.name + "' has no points");
        if (c.color_jitter < 0.0 || c.noise_sigma < 0.0) {
            throw ConfigError("class '" + c.name + "' has a negative jitter or noise");
        }
        for (double e : c.extent)
            if (e < 0.0) throw ConfigError("class '" + c.name + "' has a negative extent");
    }
}

SceneSpec SceneSpec::from_json(const nlohmann::json& j) {
    try {
        SceneSpec spec;
        spec.seed = j.value("seed", std::uint64_t{0});
        for (const auto& c : j.at("classes")) {
            ClassSpec cs;
            cs.name = c.value("name", "class_" + std::to_string(spec.classes.size()));
            cs.point_count = c.at("point_count").get<std::size_t>();
            cs.geometry = parse_geometry(c.value("geometry", std::string("scatter")));
            cs.center = triple(c, "center", cs.center);
            cs.extent = triple(c, "extent", cs.extent);
            cs.color_mean = triple(c, "color_mean", cs.color_mean);
            cs.color_jitter = c.value("color_jitter", 0.0);
            cs.noise_sigma = c.value("noise_sigma", 0.0);
            spec.classes.push_back(std::move(cs));
        }
        spec.validate();
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("scene spec: ") + e.what());
    }
}

nlohmann::json SceneSpec::to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["classes"] = nlohmann::json::array();
    for (const auto& c : classes) {
        j["classes"].push_back({{"name", c.name},
                                {"point_count", c.point_count},
                                {"geometry", geometry_name(c.geometry)},
                                {"center", c.center},
                                {"extent", c.extent},
                                {"color_mean", c.color_mean},
                                {"color_jitter", c.color_jitter},
                                {"noise_sigma", c.noise_sigma}});
    }
    return j;
}

PointCloud synth_scene(const SceneSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    PointCloud cloud;
    cloud.num_classes = spec.classes.size();
    cloud.labels.emplace();
    for (std::size_t label = 0; label < spec.classes.size(); ++label) {
        const ClassSpec& cs = spec.classes[label];
        cloud.class_names.push_back(cs.name);
        const auto& c = cs.center;
        const auto& e = cs.extent;
        for (std::size_t i = 0; i < cs.point_count; ++i) {
            double p[3];
            switch (cs.geometry) {
                case Geometry::plane:
                    p[0] = c[0] + rng.uniform(-0.5, 0.5) * e[0];
                    p[1] = c[1] + rng.uniform(-0.5, 0.5) * e[1];
                    p[2] = c[2];
                    break;
                case Geometry::scatter:
                    for (int a = 0; a < 3; ++a) p[a] = c[a] + rng.uniform(-0.5, 0.5) * e[a];
                    break;
                case Geometry::box: {
                    // Pick a face with probability proportional to its area.
                    const double areas[3] = {e[1] * e[2], e[0] * e[2], e[0] * e[1]};
                    const double total = 2.0 * (areas[0] + areas[1] + areas[2]);
                    double pick = rng.uniform() * total;
                    int axis = 0;
                    while (axis < 2 && pick >= 2.0 * areas[axis]) pick -= 2.0 * areas[axis++];
                    for (int a = 0; a < 3; ++a) p[a] = c[a] + rng.uniform(-0.5, 0.5) * e[a];
                    p[axis] = c[axis] + (rng.uniform() < 0.5 ? -0.5 : 0.5) * e[axis];
                    break;
                }
                case Geometry::cylinder: {
                    const double theta = rng.uniform(0.0, 2.0 * M_PI);
                    const double radius = 0.5 * e[0];
                    p[0] = c[0] + radius * std::cos(theta);
                    p[1] = c[1] + radius * std::sin(theta);
                    p[2] = c[2] + rng.uniform(-0.5, 0.5) * e[2];
                    break;
                }
            }
            for (double& v : p) {
                if (cs.noise_sigma > 0.0) v += rng.normal(0.0, cs.noise_sigma);
            }
            cloud.positions.insert(cloud.positions.end(), p, p + 3);
            for (int a = 0; a < 3; ++a) {
                double col = cs.color_mean[a];
                if (cs.color_jitter > 0.0) col += rng.normal(0.0, cs.color_jitter);
                col = std::clamp(col, 0.0, 1.0);
                cloud.colors.push_back(std::round(col * 255.0) / 255.0);
            }
            cloud.labels->push_back(static_cast<int>(label));
        }
    }
    return cloud;
}

std::vector<double> class_frequencies(const PointCloud& cloud) {
    if (!cloud.labels) throw ContractError("class_frequencies: cloud has no labels");
    std::vector<double> freq(cloud.num_classes, 0.0);
    for (int l : *cloud.labels) freq[static_cast<std::size_t>(l)] += 1.0;
    const double n = static_cast<double>(cloud.labels->size());
    for (double& f : freq) f /= n;
    return freq;
}

// ---------------------------------------------------------------------------
// PLY

namespace {

struct PlyProperty {
    std::string name;
    bool is_list = false;
};

struct PlyElement {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> properties;
};

std::vector<std::string> split_words(const std::string& line) {
    std::istringstream in(line);
    std::vector<std::string> words;
    for (std::string w; in >> w;) words.push_back(w);
    return words;
}

double parse_number(const std::string& token, std::size_t line) {
    try {
        std::size_t used = 0;
        const double v = std::stod(token, &used);
        if (used != token.size()) throw std::invalid_argument(token);
        return v;
    } catch (const std::exception&) {
        throw ParseError(line, "not a number: '" + token + "'");
    }
}

int parse_label(const std::string& token, std::size_t line) {
    const double v = parse_number(token, line);
    if (v != std::floor(v) || v < 0 || v > std::numeric_limits<int>::max()) {
        throw ParseError(line, "label must be a nonnegative integer, got '" + token + "'");
    }
    return static_cast<int>(v);
}

}  // namespace

PointCloud parse_ply(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    auto next_line = [&]() -> bool {
        if (!std::getline(in, line)) return false;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
    };

    if (!next_line() || line != "ply") throw ParseError(std::max<std::size_t>(line_no, 1), "missing 'ply' magic");
    std::vector<PlyElement> elements;
    std::vector<std::string> class_names;
    bool saw_format = false;
    bool saw_end = false;
    while (next_line()) {
        const auto words = split_words(line);
        if (words.empty()) continue;
        const std::string& key = words[0];
        if (key == "format") {
            if (words.size() != 3) throw ParseError(line_no, "malformed format line");
            if (words[1] != "ascii") throw FormatError("unsupported PLY format '" + words[1] + "' (ASCII only)");
            saw_format = true;
        } else if (key == "comment" || key == "obj_info") {
            if (words.size() >= 2 && words[0] == "comment" && words[1] == "classes") {
                class_names.assign(words.begin() + 2, words.end());
            }
        } else if (key == "element") {
            if (words.size() != 3) throw ParseError(line_no, "malformed element line");
            PlyElement el;
            el.name = words[1];
            try {
                el.count = std::stoull(words[2]);
            } catch (const std::exception&) {
                throw ParseError(line_no, "bad element count '" + words[2] + "'");
            }
            elements.push_back(std::move(el));
        } else if (key == "property") {
            if (elements.empty()) throw ParseError(line_no, "property before any element");
            if (words.size() == 5 && words[1] == "list") {
                elements.back().properties.push_back({words[4], true});
            } else if (words.size() == 3) {
                elements.back().properties.push_back({words[2], false});
            } else {
                throw ParseError(line_no, "malformed property line");
            }
        } else if (key == "end_header") {
            saw_end = true;
            break;
        } else {
            throw ParseError(line_no, "unexpected header keyword '" + key + "'");
        }
    }
    if (!saw_end) throw ParseError(line_no, "header ended without end_header");
    if (!saw_format) throw ParseError(line_no, "header has no format line");

    PointCloud cloud;
    bool found_vertex = false;
    for (const auto& el : elements) {
        if (el.name != "vertex") {
            for (std::size_t r = 0; r < el.count; ++r)
                if (!next_line()) throw ParseError(line_no, "unexpected end of file in element '" + el.name + "'");
            continue;
        }
        found_vertex = true;
        std::map<std::string, std::size_t> column;
        for (std::size_t p = 0; p < el.properties.size(); ++p) {
            if (el.properties[p].is_list) throw FormatError("list property '" + el.properties[p].name + "' in vertex element");
            column[el.properties[p].name] = p;
        }
        for (const char* required : {"x", "y", "z", "red", "green", "blue"}) {
            if (!column.count(required)) throw FormatError(std::string("missing required vertex property '") + required + "'");
        }
        std::optional<std::size_t> label_col;
        for (const char* name : {"label", "class", "scalar_label"}) {
            if (column.count(name)) {
                label_col = column[name];
                break;
            }
        }
        cloud.positions.reserve(el.count * 3);
        cloud.colors.reserve(el.count * 3);
        if (label_col) cloud.labels.emplace().reserve(el.count);
        for (std::size_t r = 0; r < el.count; ++r) {
            if (!next_line()) throw ParseError(line_no, "unexpected end of file after " + std::to_string(r) + " vertices");
            const auto tokens = split_words(line);
            if (tokens.size() != el.properties.size()) {
                throw ParseError(line_no, "expected " + std::to_string(el.properties.size()) + " values, got " +
                                              std::to_string(tokens.size()));
            }
            for (const char* axis : {"x", "y", "z"}) cloud.positions.push_back(parse_number(tokens[column[axis]], line_no));
            for (const char* channel : {"red", "green", "blue"}) {
                const double v = parse_number(tokens[column[channel]], line_no);
                if (v < 0.0 || v > 255.0) throw ParseError(line_no, "color value " + tokens[column[channel]] + " outside 0-255");
                cloud.colors.push_back(v / 255.0);
            }
            if (label_col) cloud.labels->push_back(parse_label(tokens[*label_col], line_no));
        }
    }
    if (!found_vertex) throw FormatError("PLY file has no vertex element");
    if (cloud.positions.empty()) throw FormatError("PLY file has no points");

    cloud.class_names = std::move(class_names);
    std::size_t max_label = 0;
    if (cloud.labels)
        for (int l : *cloud.labels) max_label = std::max(max_label, static_cast<std::size_t>(l) + 1);
    cloud.num_classes = std::max(cloud.class_names.size(), max_label);
    if (!cloud.class_names.empty() && cloud.class_names.size() < cloud.num_classes) cloud.class_names.clear();
    return cloud;
}

PointCloud load_ply(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    return parse_ply(in);
}

void write_ply(std::ostream& out, const PointCloud& cloud, std::span<const int> predicted) {
    cloud.validate();
    if (!predicted.empty() && predicted.size() != cloud.size()) {
        throw ContractError("write_ply: " + std::to_string(predicted.size()) + " predictions for " +
                            std::to_string(cloud.size()) + " points");
    }
    out << "ply\nformat ascii 1.0\n";
    if (!cloud.class_names.empty()) {
        out << "comment classes";
        for (const auto& name : cloud.class_names) out << ' ' << name;
        out << '\n';
    }
    out << "element vertex " << cloud.size() << '\n';
    out << "property double x\nproperty double y\nproperty double z\n";
    out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    if (cloud.labels) out << "property int label\n";
    if (!predicted.empty()) out << "property int pred\n";
    out << "end_header\n";
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        out << cloud.positions[3 * i] << ' ' << cloud.positions[3 * i + 1] << ' ' << cloud.positions[3 * i + 2];
        for (int a = 0; a < 3; ++a) out << ' ' << static_cast<int>(std::lround(cloud.colors[3 * i + a] * 255.0));
        if (cloud.labels) out << ' ' << (*cloud.labels)[i];
        if (!predicted.empty()) out << ' ' << predicted[i];
        out << '\n';
    }
}

void save_ply(const PointCloud& cloud, const std::filesystem::path& path, std::span<const int> predicted) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    write_ply(out, cloud, predicted);
    out.flush();
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

}  // namespace mcnet
