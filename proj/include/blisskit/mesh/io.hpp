#pragma once

#include <filesystem>

#include "blisskit/mesh/scan_cloud.hpp"
#include "blisskit/mesh/tri_mesh.hpp"

namespace blisskit::mesh {

// Wavefront OBJ: "v x y z" and "f a b c" records with 1-based indices
// (a/b/c forms accepted, only the position index is used).
TriMesh load_mesh(const std::filesystem::path& path);
void save_mesh(const TriMesh& mesh, const std::filesystem::path& path);
// Writes positions on a fixed face list without validating geometry.
void save_mesh(const Vertices& v, const Faces& f, const std::filesystem::path& path);

// ASCII PLY (.ply) or whitespace separated XYZ (.xyz, 3 or 6 columns).
ScanCloud load_cloud(const std::filesystem::path& path);
void save_cloud(const ScanCloud& cloud, const std::filesystem::path& path);

}  // namespace blisskit::mesh
