#include <fstream>

#include <nlohmann/json.hpp>

#include "blisskit/bootstrap/bootstrap.hpp"
#include "blisskit/mesh/io.hpp"

namespace blisskit::bootstrap {

namespace fs = std::filesystem;
using nlohmann::json;

const char* split_name(Split s) {
  switch (s) {
    case Split::RPca: return "r_pca";
    case Split::RDeform: return "r_deform";
    case Split::REval: return "r_eval";
    case Split::Unregistered: return "u";
  }
  return "u";
}

Split parse_split(const std::string& name) {
  for (Split s : {Split::RPca, Split::RDeform, Split::REval, Split::Unregistered})
    if (name == split_name(s)) return s;
  throw Error("unknown split '" + name + "'");
}

std::vector<int> Dataset::indices(Split s) const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(scans.size()); ++i)
    if (scans[i].split == s) out.push_back(i);
  return out;
}

Dataset load_dataset(const fs::path& dir) {
  const fs::path manifest = dir / "manifest.json";
  std::ifstream in(manifest);
  if (!in) throw Error("missing dataset manifest " + manifest.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(manifest.string(), 0, e.what());
  }
  Dataset d;
  try {
    d.bundle = rig::load_bundle(dir / j.at("template").get<std::string>());
    const auto pose = j.at("init_pose").get<std::vector<double>>();
    d.init_pose = rig::Pose::from_vector(Eigen::Map<const VectorX>(pose.data(), static_cast<Eigen::Index>(pose.size())));
    if (d.init_pose.num_joints() != d.bundle.num_joints())
      throw ParseError(manifest.string(), 0, "init_pose does not match the template's joints");
    for (const auto& s : j.at("scans")) {
      ScanEntry e;
      e.id = s.at("id").get<std::string>();
      e.split = parse_split(s.at("split").get<std::string>());
      e.scan = mesh::load_cloud(dir / s.at("scan").get<std::string>());
      if (s.contains("registration")) {
        e.registration = mesh::load_mesh(dir / s.at("registration").get<std::string>()).vertices();
        if (e.registration.rows() != d.bundle.num_vertices())
          throw GeometryError("registration of " + e.id + " does not match the template");
      } else if (e.split != Split::Unregistered) {
        throw ParseError(manifest.string(), 0, "registered scan " + e.id + " has no registration");
      }
      d.scans.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw ParseError(manifest.string(), 0, e.what());
  }
  return d;
}

void save_dataset(const Dataset& data, const fs::path& dir) {
  fs::create_directories(dir / "scans");
  fs::create_directories(dir / "registrations");
  rig::save_bundle(data.bundle, dir / "template");
  json j;
  j["template"] = "template";
  const VectorX pose = data.init_pose.to_vector();
  j["init_pose"] = std::vector<double>(pose.data(), pose.data() + pose.size());
  json scans = json::array();
  json splits = json::object();
  for (const auto& e : data.scans) {
    json s;
    s["id"] = e.id;
    s["split"] = split_name(e.split);
    s["scan"] = "scans/" + e.id + ".ply";
    mesh::save_cloud(e.scan, dir / "scans" / (e.id + ".ply"));
    if (e.registration.rows() > 0) {
      s["registration"] = "registrations/" + e.id + ".obj";
      mesh::save_mesh(e.registration, data.bundle.mesh().faces(), dir / "registrations" / (e.id + ".obj"));
    }
    splits[split_name(e.split)].push_back(e.id);
    scans.push_back(s);
  }
  j["scans"] = scans;
  j["splits"] = splits;
  std::ofstream out(dir / "manifest.json");
  out << j.dump(2) << '\n';
  if (!out) throw Error("cannot write " + (dir / "manifest.json").string());
}

}  // namespace blisskit::bootstrap
