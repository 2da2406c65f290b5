#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "twophase/expansion.hpp"
#include "twophase/mesh.hpp"
#include "twophase/optimizer.hpp"

namespace twophase::io {

/// Reads a 2D triangulation from a Gmsh MSH 2.x ASCII file. Only triangle
/// elements (type 2) are kept; nodes not referenced by any triangle are
/// dropped and physical tags ignored. The boundary is detected topologically.
Mesh<double> import_msh(const std::string& path);

/// Writes nodes and triangles as MSH 2.2 ASCII.
void write_msh(const Mesh<double>& mesh, const std::string& path);

using NamedField = std::pair<std::string, NodalField<double>>;

/// VTK legacy ASCII unstructured grid with one POINT_DATA scalar block per
/// field. Numbers use 17 significant digits, so output is byte-stable.
void export_vtk(const Mesh<double>& mesh, const std::vector<NamedField>& fields, const std::string& path);

struct VtkData {
  Mesh<double>::Points points;
  Triangles cells;
  std::vector<int> cell_types;
  std::map<std::string, NodalField<double>> point_data;
};

VtkData read_vtk(const std::string& path);

/// Node-indexed `node_id,value` CSV. A non-numeric first line is treated as
/// a header. Every node must appear exactly once.
NodalField<double> read_nodal_csv(const std::string& path, Eigen::Index n_nodes);
void write_nodal_csv(const std::string& path, const NodalField<double>& field, const std::string& name);

/// Columns iter, F, volume, rho, Lambda, L1_change.
void write_history_csv(const std::string& path, const OptimizerState<double>& state);

/// Columns eps, lambda_eps, truncated_sum, remainder.
void write_remainder_csv(const std::string& path, const RemainderReport<double>& report);
std::string remainder_summary_json(const RemainderReport<double>& report);

/// printf("%.17g").
std::string format_number(double v);

}  // namespace twophase::io
