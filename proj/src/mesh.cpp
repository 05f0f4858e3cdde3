#include "dstyle/mesh.hpp"

#include "dstyle/errors.hpp"

#include <fmt/format.h>

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>

namespace dstyle {

namespace {

// Area threshold for the mesh normalized to a unit longest side.
constexpr double kMinNormalizedArea = 1e-12;

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) {
            ++i;
        }
        const std::size_t start = i;
        while (i < s.size() && s[i] != ' ' && s[i] != '\t') {
            ++i;
        }
        if (i > start) {
            out.push_back(s.substr(start, i - start));
        }
    }
    return out;
}

double parse_double(std::string_view tok, std::size_t line) {
    // std::from_chars for double is available in libstdc++ 11.
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        throw FormatError(fmt::format("OBJ line {}: invalid number '{}'", line, tok));
    }
    return value;
}

long parse_index(std::string_view tok, std::size_t line) {
    // "7", "7/2", "7//3", "7/2/3": only the vertex index matters.
    const auto slash = tok.find('/');
    const std::string_view head = tok.substr(0, slash);
    long value = 0;
    const auto [ptr, ec] = std::from_chars(head.data(), head.data() + head.size(), value);
    if (ec != std::errc() || ptr != head.data() + head.size() || value == 0) {
        throw FormatError(fmt::format("OBJ line {}: invalid face index '{}'", line, tok));
    }
    return value;
}

} // namespace

Aabb bounds(const Mesh& mesh) {
    Aabb box;
    for (const auto& v : mesh.vertices) {
        box.extend(v);
    }
    return box;
}

Mesh make_mesh(std::vector<Vec3> vertices, std::vector<Face> faces) {
    if (vertices.empty() || faces.empty()) {
        throw FormatError("mesh is empty");
    }
    Aabb box;
    for (const auto& v : vertices) {
        if (!v.allFinite()) {
            throw FormatError("mesh has non-finite vertex coordinates");
        }
        box.extend(v);
    }
    const double longest = box.extent().maxCoeff();
    const double scale2 = longest > 0.0 ? longest * longest : 1.0;

    Mesh mesh;
    mesh.face_normals.reserve(faces.size());
    for (std::size_t f = 0; f < faces.size(); ++f) {
        for (auto idx : faces[f]) {
            if (idx >= vertices.size()) {
                throw FormatError(fmt::format("face {} references vertex {} but the mesh has {} vertices",
                                              f, idx, vertices.size()));
            }
        }
        const Vec3& a = vertices[faces[f][0]];
        const Vec3& b = vertices[faces[f][1]];
        const Vec3& c = vertices[faces[f][2]];
        const Vec3 n = (b - a).cross(c - a);
        const double area = 0.5 * n.norm();
        if (!(area / scale2 > kMinNormalizedArea)) {
            throw FormatError(fmt::format("face {} is degenerate (area {:g})", f, area));
        }
        mesh.face_normals.push_back(n.normalized());
    }
    mesh.vertices = std::move(vertices);
    mesh.faces = std::move(faces);
    return mesh;
}

Mesh parse_obj(std::string_view text) {
    std::vector<Vec3> vertices;
    std::vector<Face> faces;
    std::vector<std::size_t> face_lines;

    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        const std::string_view raw = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;

        std::string_view line = trim(raw);
        if (const auto hash = line.find('#'); hash != std::string_view::npos) {
            line = trim(line.substr(0, hash));
        }
        if (line.empty()) {
            continue;
        }
        const auto toks = split_ws(line);
        if (toks[0] == "v") {
            if (toks.size() < 4) {
                throw FormatError(fmt::format("OBJ line {}: vertex needs 3 coordinates", line_no));
            }
            vertices.emplace_back(parse_double(toks[1], line_no), parse_double(toks[2], line_no),
                                  parse_double(toks[3], line_no));
        } else if (toks[0] == "f") {
            if (toks.size() < 4) {
                throw FormatError(fmt::format("OBJ line {}: face needs at least 3 vertices", line_no));
            }
            std::vector<std::uint32_t> poly;
            for (std::size_t i = 1; i < toks.size(); ++i) {
                long idx = parse_index(toks[i], line_no);
                const long count = static_cast<long>(vertices.size());
                idx = idx < 0 ? count + idx : idx - 1;
                if (idx < 0 || idx >= count) {
                    throw FormatError(fmt::format("OBJ line {}: vertex index {} out of range (have {} vertices)",
                                                  line_no, toks[i], count));
                }
                poly.push_back(static_cast<std::uint32_t>(idx));
            }
            for (std::size_t i = 1; i + 1 < poly.size(); ++i) {
                faces.push_back({poly[0], poly[i], poly[i + 1]});
                face_lines.push_back(line_no);
            }
        }
        // Everything else (vn, vt, o, g, s, usemtl, mtllib, ...) is ignored.
    }
    if (vertices.empty() || faces.empty()) {
        throw FormatError("OBJ contains no faces");
    }
    try {
        return make_mesh(std::move(vertices), std::move(faces));
    } catch (const FormatError& e) {
        throw FormatError(fmt::format("OBJ: {}", e.what()));
    }
}

Mesh load_obj(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError(fmt::format("cannot open OBJ file '{}'", path.string()));
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_obj(ss.str());
}

void save_obj(const Mesh& mesh, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw FormatError(fmt::format("cannot write OBJ file '{}'", path.string()));
    }
    for (const auto& v : mesh.vertices) {
        out << fmt::format("v {:.17g} {:.17g} {:.17g}\n", v.x(), v.y(), v.z());
    }
    for (const auto& f : mesh.faces) {
        out << fmt::format("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1);
    }
}

Mesh normalize_mesh(const Mesh& mesh) {
    const Aabb box = bounds(mesh);
    const double longest = box.extent().maxCoeff();
    if (!(longest > 0.0)) {
        throw FormatError("cannot normalize a mesh with zero extent");
    }
    const Vec3 center = box.center();
    Mesh out = mesh;
    for (auto& v : out.vertices) {
        v = (v - center) / longest;
    }
    return out;
}

} // namespace dstyle
