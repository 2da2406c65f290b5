#include "twophase/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

#include "twophase/errors.hpp"

namespace twophase::io {

namespace {

class LineReader {
 public:
  explicit LineReader(const std::string& path) : path_(path), in_(path) {
    if (!in_) throw ParseError(path, 0, "cannot open file");
  }

  bool next(std::string& line) {
    if (!std::getline(in_, line)) return false;
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  }

  std::string require(const char* context) {
    std::string line;
    if (!next(line)) fail(std::string("unexpected end of file in ") + context);
    return line;
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(path_, line_no_, what); }

  long line_no() const { return line_no_; }

 private:
  std::string path_;
  std::ifstream in_;
  long line_no_ = 0;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

long parse_count(LineReader& r, const char* section) {
  std::istringstream ss(r.require(section));
  long n = -1;
  if (!(ss >> n) || n < 0) r.fail(std::string("invalid count in ") + section);
  return n;
}

void expect_end(LineReader& r, const std::string& tag) {
  if (trim(r.require(tag.c_str())) != tag) r.fail("expected " + tag);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

void check_written(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw std::runtime_error("I/O error writing " + path);
}

}  // namespace

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Mesh<double> import_msh(const std::string& path) {
  LineReader r(path);
  bool have_format = false;
  std::vector<long> node_ids;
  std::vector<std::array<double, 2>> coords;
  std::vector<std::array<long, 3>> tris;
  std::string line;
  while (r.next(line)) {
    const std::string tag = trim(line);
    if (tag.empty()) continue;
    if (tag == "$MeshFormat") {
      std::istringstream ss(r.require("$MeshFormat"));
      std::string version;
      int file_type = -1;
      int data_size = 0;
      if (!(ss >> version >> file_type >> data_size)) r.fail("malformed $MeshFormat header");
      if (version.rfind("2", 0) != 0) r.fail("unsupported MSH version " + version + " (need 2.x)");
      if (file_type != 0) r.fail("binary MSH files are not supported");
      expect_end(r, "$EndMeshFormat");
      have_format = true;
    } else if (tag == "$Nodes") {
      if (!have_format) r.fail("$Nodes before $MeshFormat");
      const long n = parse_count(r, "$Nodes");
      node_ids.reserve(static_cast<std::size_t>(n));
      coords.reserve(static_cast<std::size_t>(n));
      for (long i = 0; i < n; ++i) {
        std::istringstream ss(r.require("$Nodes"));
        long id = 0;
        double x = 0, y = 0, z = 0;
        if (!(ss >> id >> x >> y >> z)) r.fail("malformed node record");
        node_ids.push_back(id);
        coords.push_back({x, y});
      }
      expect_end(r, "$EndNodes");
    } else if (tag == "$Elements") {
      if (!have_format) r.fail("$Elements before $MeshFormat");
      const long n = parse_count(r, "$Elements");
      for (long i = 0; i < n; ++i) {
        std::istringstream ss(r.require("$Elements"));
        long id = 0;
        int type = 0, ntags = 0;
        if (!(ss >> id >> type >> ntags) || ntags < 0) r.fail("malformed element record");
        for (int k = 0; k < ntags; ++k) {
          long tagv = 0;
          if (!(ss >> tagv)) r.fail("malformed element tags");
        }
        if (type != 2) continue;
        std::array<long, 3> t{};
        if (!(ss >> t[0] >> t[1] >> t[2])) r.fail("malformed triangle connectivity");
        tris.push_back(t);
      }
      expect_end(r, "$EndElements");
    } else if (tag.size() > 1 && tag[0] == '$') {
      const std::string end = "$End" + tag.substr(1);
      std::string skip;
      do {
        skip = trim(r.require(tag.c_str()));
      } while (skip != end);
    } else {
      r.fail("unexpected content outside a section: " + tag);
    }
  }
  if (!have_format) throw ParseError(path, r.line_no(), "missing $MeshFormat section");
  if (tris.empty()) throw ParseError(path, r.line_no(), "no triangle elements (type 2) found");

  std::unordered_map<long, std::size_t> by_id;
  for (std::size_t i = 0; i < node_ids.size(); ++i) by_id.emplace(node_ids[i], i);
  std::vector<int> used(node_ids.size(), -1);
  for (const auto& t : tris) {
    for (long id : t) {
      const auto it = by_id.find(id);
      if (it == by_id.end()) {
        throw ParseError(path, 0, "triangle references unknown node " + std::to_string(id));
      }
      used[it->second] = 0;
    }
  }
  int next = 0;
  for (auto& u : used) {
    if (u == 0) u = next++;
  }
  Mesh<double>::Points pts(next, 2);
  for (std::size_t i = 0; i < used.size(); ++i) {
    if (used[i] >= 0) pts.row(used[i]) << coords[i][0], coords[i][1];
  }
  Triangles tri(static_cast<Eigen::Index>(tris.size()), 3);
  for (std::size_t e = 0; e < tris.size(); ++e) {
    for (int k = 0; k < 3; ++k) {
      tri(static_cast<Eigen::Index>(e), k) = used[by_id.at(tris[e][static_cast<std::size_t>(k)])];
    }
  }
  return make_mesh<double>(std::move(pts), std::move(tri));
}

void write_msh(const Mesh<double>& mesh, const std::string& path) {
  auto out = open_out(path);
  out << "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n" << mesh.n_nodes() << '\n';
  for (Eigen::Index i = 0; i < mesh.n_nodes(); ++i) {
    out << i + 1 << ' ' << format_number(mesh.nodes()(i, 0)) << ' ' << format_number(mesh.nodes()(i, 1))
        << " 0\n";
  }
  out << "$EndNodes\n$Elements\n" << mesh.n_elems() << '\n';
  for (Eigen::Index t = 0; t < mesh.n_elems(); ++t) {
    out << t + 1 << " 2 2 1 1 " << mesh.triangles()(t, 0) + 1 << ' ' << mesh.triangles()(t, 1) + 1 << ' '
        << mesh.triangles()(t, 2) + 1 << '\n';
  }
  out << "$EndElements\n";
  check_written(out, path);
}

void export_vtk(const Mesh<double>& mesh, const std::vector<NamedField>& fields, const std::string& path) {
  for (const auto& [name, f] : fields) {
    if (f.size() != mesh.n_nodes()) throw InputError("export_vtk: field " + name + " has wrong size");
    if (name.empty() || name.find_first_of(" \t\n") != std::string::npos) {
      throw InputError("export_vtk: invalid field name '" + name + "'");
    }
  }
  auto out = open_out(path);
  out << "# vtk DataFile Version 3.0\ntwophase density\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << mesh.n_nodes() << " double\n";
  for (Eigen::Index i = 0; i < mesh.n_nodes(); ++i) {
    out << format_number(mesh.nodes()(i, 0)) << ' ' << format_number(mesh.nodes()(i, 1)) << " 0\n";
  }
  out << "CELLS " << mesh.n_elems() << ' ' << 4 * mesh.n_elems() << '\n';
  for (Eigen::Index t = 0; t < mesh.n_elems(); ++t) {
    out << "3 " << mesh.triangles()(t, 0) << ' ' << mesh.triangles()(t, 1) << ' ' << mesh.triangles()(t, 2)
        << '\n';
  }
  out << "CELL_TYPES " << mesh.n_elems() << '\n';
  for (Eigen::Index t = 0; t < mesh.n_elems(); ++t) out << "5\n";
  if (!fields.empty()) {
    out << "POINT_DATA " << mesh.n_nodes() << '\n';
    for (const auto& [name, f] : fields) {
      out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
      for (Eigen::Index i = 0; i < f.size(); ++i) out << format_number(f[i]) << '\n';
    }
  }
  check_written(out, path);
}

VtkData read_vtk(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open file");
  VtkData data;
  std::string header;
  for (int i = 0; i < 4; ++i) {
    if (!std::getline(in, header)) throw ParseError(path, i + 1, "truncated VTK header");
  }
  std::string word;
  Eigen::Index n_points = 0;
  while (in >> word) {
    if (word == "POINTS") {
      std::string type;
      in >> n_points >> type;
      data.points.resize(n_points, 2);
      for (Eigen::Index i = 0; i < n_points; ++i) {
        double z = 0;
        in >> data.points(i, 0) >> data.points(i, 1) >> z;
      }
    } else if (word == "CELLS") {
      Eigen::Index n = 0, size = 0;
      in >> n >> size;
      data.cells.resize(n, 3);
      for (Eigen::Index t = 0; t < n; ++t) {
        int k = 0;
        in >> k;
        if (k != 3) throw ParseError(path, 0, "only triangle cells are supported");
        in >> data.cells(t, 0) >> data.cells(t, 1) >> data.cells(t, 2);
      }
    } else if (word == "CELL_TYPES") {
      Eigen::Index n = 0;
      in >> n;
      data.cell_types.resize(static_cast<std::size_t>(n));
      for (auto& c : data.cell_types) in >> c;
    } else if (word == "POINT_DATA") {
      in >> n_points;
    } else if (word == "SCALARS") {
      std::string name, type, lut;
      int ncomp = 1;
      in >> name >> type;
      std::string rest;
      std::getline(in, rest);
      std::istringstream(rest) >> ncomp;
      in >> lut >> lut;
      NodalField<double> f(n_points);
      for (Eigen::Index i = 0; i < n_points; ++i) in >> f[i];
      data.point_data[name] = std::move(f);
    }
    if (!in) throw ParseError(path, 0, "malformed VTK file near " + word);
  }
  return data;
}

NodalField<double> read_nodal_csv(const std::string& path, Eigen::Index n_nodes) {
  LineReader r(path);
  NodalField<double> f = NodalField<double>::Constant(n_nodes, std::numeric_limits<double>::quiet_NaN());
  std::vector<char> seen(static_cast<std::size_t>(n_nodes), 0);
  std::string line;
  bool first = true;
  while (r.next(line)) {
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto comma = t.find(',');
    if (comma == std::string::npos) r.fail("expected node_id,value");
    long id = 0;
    double v = 0;
    try {
      std::size_t pos = 0;
      id = std::stol(t.substr(0, comma), &pos);
      v = std::stod(t.substr(comma + 1));
    } catch (const std::exception&) {
      if (first) {
        first = false;
        continue;
      }
      r.fail("malformed record");
    }
    first = false;
    if (id < 0 || id >= n_nodes) r.fail("node id " + std::to_string(id) + " out of range");
    if (seen[static_cast<std::size_t>(id)]) r.fail("duplicate node id " + std::to_string(id));
    seen[static_cast<std::size_t>(id)] = 1;
    f[id] = v;
  }
  for (Eigen::Index i = 0; i < n_nodes; ++i) {
    if (!seen[static_cast<std::size_t>(i)]) {
      throw ParseError(path, 0, "missing value for node " + std::to_string(i));
    }
  }
  return f;
}

void write_nodal_csv(const std::string& path, const NodalField<double>& field, const std::string& name) {
  auto out = open_out(path);
  out << "node_id," << name << '\n';
  for (Eigen::Index i = 0; i < field.size(); ++i) out << i << ',' << format_number(field[i]) << '\n';
  check_written(out, path);
}

void write_history_csv(const std::string& path, const OptimizerState<double>& s) {
  auto out = open_out(path);
  out << "iter,F,volume,rho,Lambda,L1_change\n";
  for (std::size_t i = 0; i < s.F_history.size(); ++i) {
    out << i << ',' << format_number(s.F_history[i]) << ',' << format_number(s.vol_history[i]) << ','
        << format_number(s.rho_history[i]) << ',' << format_number(s.Lambda_history[i]) << ','
        << format_number(s.l1_history[i]) << '\n';
  }
  check_written(out, path);
}

void write_remainder_csv(const std::string& path, const RemainderReport<double>& report) {
  auto out = open_out(path);
  out << "eps,lambda_eps,truncated_sum,remainder\n";
  for (std::size_t i = 0; i < report.eps.size(); ++i) {
    out << format_number(report.eps[i]) << ',' << format_number(report.lambda_eps[i]) << ','
        << format_number(report.truncated[i]) << ',' << format_number(report.remainders[i]) << '\n';
  }
  check_written(out, path);
}

std::string remainder_summary_json(const RemainderReport<double>& report) {
  nlohmann::ordered_json j;
  j["order"] = report.order;
  j["lambdas"] = report.lambdas;
  j["slope"] = report.slope;
  j["constant"] = report.constant;
  nlohmann::ordered_json excluded = nlohmann::ordered_json::array();
  for (std::size_t i : report.excluded) {
    excluded.push_back({{"eps", report.eps[i]}, {"remainder", report.remainders[i]}, {"floor", report.floors[i]}});
  }
  j["excluded"] = excluded;
  j["warnings"] = report.warnings;
  return j.dump(2);
}

}  // namespace twophase::io
