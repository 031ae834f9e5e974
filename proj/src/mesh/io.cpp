#include "blisskit/mesh/io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

namespace blisskit::mesh {

namespace fs = std::filesystem;

namespace {

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

double parse_double(std::string_view tok, const fs::path& path, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
    throw ParseError(path.string(), line, "invalid number '" + std::string(tok) + "'");
  return v;
}

long parse_long(std::string_view tok, const fs::path& path, std::size_t line) {
  long v = 0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
    throw ParseError(path.string(), line, "invalid integer '" + std::string(tok) + "'");
  return v;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  return in;
}

void write_row(std::FILE* f, const char* prefix, double a, double b, double c) {
  std::fprintf(f, "%s %.9g %.9g %.9g\n", prefix, a, b, c);
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

std::unique_ptr<std::FILE, FileCloser> open_c(const fs::path& path) {
  std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "w"));
  if (!f) throw Error("cannot write " + path.string());
  return f;
}

}  // namespace

TriMesh load_mesh(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::vector<double> verts;
  std::vector<int> faces;
  std::vector<std::size_t> face_lines;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tok = split_ws(line);
    if (tok.empty() || tok[0][0] == '#') continue;
    if (tok[0] == "v") {
      if (tok.size() < 4) throw ParseError(path.string(), line_no, "vertex record needs 3 coordinates");
      for (int c = 1; c <= 3; ++c) verts.push_back(parse_double(tok[c], path, line_no));
    } else if (tok[0] == "f") {
      if (tok.size() != 4)
        throw ParseError(path.string(), line_no, "only triangular faces are supported");
      for (int c = 1; c <= 3; ++c) {
        std::string_view t = tok[c];
        t = t.substr(0, t.find('/'));
        const long idx = parse_long(t, path, line_no);
        if (idx < 1) throw ParseError(path.string(), line_no, "face index must be >= 1");
        faces.push_back(static_cast<int>(idx - 1));
      }
      face_lines.push_back(line_no);
    }
  }
  const long nv = static_cast<long>(verts.size() / 3);
  for (std::size_t k = 0; k < faces.size(); ++k)
    if (faces[k] >= nv)
      throw ParseError(path.string(), face_lines[k / 3],
                       "face index " + std::to_string(faces[k] + 1) + " out of range (" + std::to_string(nv) +
                           " vertices)");
  Vertices v = Eigen::Map<Vertices>(verts.data(), nv, 3);
  Faces f = Eigen::Map<Faces>(faces.data(), static_cast<long>(faces.size() / 3), 3);
  return TriMesh(std::move(v), std::move(f));
}

void save_mesh(const Vertices& v, const Faces& f, const fs::path& path) {
  auto out = open_c(path);
  for (int i = 0; i < v.rows(); ++i) write_row(out.get(), "v", v(i, 0), v(i, 1), v(i, 2));
  for (int k = 0; k < f.rows(); ++k) std::fprintf(out.get(), "f %d %d %d\n", f(k, 0) + 1, f(k, 1) + 1, f(k, 2) + 1);
  if (std::ferror(out.get())) throw Error("write failed: " + path.string());
}

void save_mesh(const TriMesh& mesh, const fs::path& path) { save_mesh(mesh.vertices(), mesh.faces(), path); }

namespace {

ScanCloud load_xyz(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::vector<double> pts, nrm;
  std::size_t columns = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tok = split_ws(line);
    if (tok.empty() || tok[0][0] == '#') continue;
    if (tok.size() != 3 && tok.size() != 6)
      throw ParseError(path.string(), line_no, "expected 3 or 6 columns, got " + std::to_string(tok.size()));
    if (columns == 0) columns = tok.size();
    if (tok.size() != columns) throw ParseError(path.string(), line_no, "inconsistent column count");
    for (int c = 0; c < 3; ++c) pts.push_back(parse_double(tok[c], path, line_no));
    if (columns == 6)
      for (int c = 3; c < 6; ++c) nrm.push_back(parse_double(tok[c], path, line_no));
  }
  const long n = static_cast<long>(pts.size() / 3);
  Points p = Eigen::Map<Points>(pts.data(), n, 3);
  Points nn;
  if (!nrm.empty()) nn = Eigen::Map<Points>(nrm.data(), n, 3);
  return ScanCloud(std::move(p), std::move(nn), Provenance::Imported);
}

ScanCloud load_ply(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::string line;
  std::size_t line_no = 0;
  long vertex_count = -1;
  bool in_vertex = false;
  std::vector<std::string> props;
  Provenance prov = Provenance::Imported;

  if (!std::getline(in, line) || split_ws(line).empty() || split_ws(line)[0] != "ply")
    throw ParseError(path.string(), 1, "missing 'ply' magic");
  ++line_no;
  bool header_done = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok[0] == "format") {
      if (tok.size() < 2 || tok[1] != "ascii") throw ParseError(path.string(), line_no, "only ascii PLY is supported");
    } else if (tok[0] == "comment") {
      if (tok.size() >= 3 && tok[1] == "provenance" && tok[2] == "synthetic") prov = Provenance::Synthetic;
    } else if (tok[0] == "element") {
      if (tok.size() != 3) throw ParseError(path.string(), line_no, "malformed element line");
      in_vertex = tok[1] == "vertex";
      if (in_vertex) vertex_count = parse_long(tok[2], path, line_no);
    } else if (tok[0] == "property") {
      if (in_vertex) props.emplace_back(tok.back());
    } else if (tok[0] == "end_header") {
      header_done = true;
      break;
    }
  }
  if (!header_done) throw ParseError(path.string(), line_no, "missing end_header");
  if (vertex_count < 0) throw ParseError(path.string(), line_no, "no vertex element");
  auto find_prop = [&](const char* name) {
    const auto it = std::find(props.begin(), props.end(), name);
    return it == props.end() ? -1 : static_cast<int>(it - props.begin());
  };
  const int ix = find_prop("x"), iy = find_prop("y"), iz = find_prop("z");
  const int inx = find_prop("nx"), iny = find_prop("ny"), inz = find_prop("nz");
  if (ix < 0 || iy < 0 || iz < 0) throw ParseError(path.string(), line_no, "vertex element lacks x/y/z");
  const bool with_normals = inx >= 0 && iny >= 0 && inz >= 0;

  Points p(vertex_count, 3);
  Points nn(with_normals ? vertex_count : 0, 3);
  for (long i = 0; i < vertex_count; ++i) {
    if (!std::getline(in, line)) throw ParseError(path.string(), line_no, "unexpected end of vertex data");
    ++line_no;
    const auto tok = split_ws(line);
    if (tok.size() < props.size())
      throw ParseError(path.string(), line_no, "vertex row has " + std::to_string(tok.size()) + " values, expected " +
                                                   std::to_string(props.size()));
    p(i, 0) = parse_double(tok[ix], path, line_no);
    p(i, 1) = parse_double(tok[iy], path, line_no);
    p(i, 2) = parse_double(tok[iz], path, line_no);
    if (with_normals) {
      nn(i, 0) = parse_double(tok[inx], path, line_no);
      nn(i, 1) = parse_double(tok[iny], path, line_no);
      nn(i, 2) = parse_double(tok[inz], path, line_no);
    }
  }
  return ScanCloud(std::move(p), std::move(nn), prov);
}

}  // namespace

ScanCloud load_cloud(const fs::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".ply") return load_ply(path);
  if (ext == ".xyz") return load_xyz(path);
  throw ParseError(path.string(), 0, "unsupported cloud extension '" + ext + "'");
}

void save_cloud(const ScanCloud& cloud, const fs::path& path) {
  const std::string ext = path.extension().string();
  const Points& p = cloud.points();
  const Points& n = cloud.normals();
  auto out = open_c(path);
  if (ext == ".xyz") {
    for (int i = 0; i < p.rows(); ++i) {
      if (cloud.has_normals())
        std::fprintf(out.get(), "%.9g %.9g %.9g %.9g %.9g %.9g\n", p(i, 0), p(i, 1), p(i, 2), n(i, 0), n(i, 1), n(i, 2));
      else
        std::fprintf(out.get(), "%.9g %.9g %.9g\n", p(i, 0), p(i, 1), p(i, 2));
    }
  } else if (ext == ".ply") {
    std::fprintf(out.get(), "ply\nformat ascii 1.0\n");
    if (cloud.provenance() == Provenance::Synthetic) std::fprintf(out.get(), "comment provenance synthetic\n");
    std::fprintf(out.get(), "element vertex %ld\nproperty double x\nproperty double y\nproperty double z\n",
                 static_cast<long>(p.rows()));
    if (cloud.has_normals()) std::fprintf(out.get(), "property double nx\nproperty double ny\nproperty double nz\n");
    std::fprintf(out.get(), "end_header\n");
    for (int i = 0; i < p.rows(); ++i) {
      if (cloud.has_normals())
        std::fprintf(out.get(), "%.9g %.9g %.9g %.9g %.9g %.9g\n", p(i, 0), p(i, 1), p(i, 2), n(i, 0), n(i, 1), n(i, 2));
      else
        std::fprintf(out.get(), "%.9g %.9g %.9g\n", p(i, 0), p(i, 1), p(i, 2));
    }
  } else {
    throw Error("unsupported cloud extension '" + ext + "'");
  }
  if (std::ferror(out.get())) throw Error("write failed: " + path.string());
}

}  // namespace blisskit::mesh
