#pragma once

#include <filesystem>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

#include "stvf/mesh.hpp"
#include "stvf/stepper.hpp"

namespace stvf {

/// Nodal values of a structured-mesh field, row-major from (0,0).
struct FieldSnapshot {
    Index n = 0;
    double time = 0.0;
    Vector values;
};

/// 17 significant digits; parsing the result gives back v exactly.
[[nodiscard]] std::string format_real(double v);

/// "# n=<n> time=<t>" followed by (n+1)^2 lines "x,y,value".
[[nodiscard]] std::string format_field_csv(const FeFunction& f, const Mesh& mesh, double time);
void write_field_csv(const FeFunction& f, const Mesh& mesh, const std::filesystem::path& path,
                     double time = 0.0);
[[nodiscard]] FieldSnapshot parse_field_csv(std::string_view text);
[[nodiscard]] FieldSnapshot read_field_csv(const std::filesystem::path& path);

/// Plain PGM (P2), (n+1) x (n+1), maxval 255, first row at y = 1.
[[nodiscard]] std::string format_field_pgm(const FeFunction& f, const Mesh& mesh, double lo,
                                           double hi);
void write_field_pgm(const FeFunction& f, const Mesh& mesh, const std::filesystem::path& path,
                     double lo, double hi);

/// step,time,tv_eps,tv,fidelity,total,increment_sq,nonlinear_iters
[[nodiscard]] std::string format_energy_csv(const TrajectoryRecord& rec);
void write_energy_csv(const TrajectoryRecord& rec, const std::filesystem::path& path);

/// Comma-separated table used for energy traces and study reports. Numeric
/// cells are stored already formatted by format_real.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::initializer_list<double> values);
    void add_row(std::vector<std::string> cells) { rows.push_back(std::move(cells)); }
    [[nodiscard]] double number(Index row, Index col) const;
};
[[nodiscard]] std::string format_table_csv(const Table& table);
void write_table_csv(const Table& table, const std::filesystem::path& path);
[[nodiscard]] Table parse_table_csv(std::string_view text);

void write_text_file(const std::filesystem::path& path, std::string_view contents);
[[nodiscard]] std::string read_text_file(const std::filesystem::path& path);

}  // namespace stvf
