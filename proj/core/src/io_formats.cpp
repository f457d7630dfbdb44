#include "stvf/io_formats.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace stvf {

std::string format_real(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    if (res.ec != std::errc{}) {
        throw std::runtime_error("format_real: conversion failed");
    }
    return std::string(buf, res.ptr);
}

namespace {

double parse_real(std::string_view s)
{
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw std::runtime_error("malformed number '" + std::string(s) + "'");
    }
    return v;
}

std::vector<std::string_view> split(std::string_view line, char sep)
{
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        parts.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
        if (pos == std::string_view::npos) {
            break;
        }
        start = pos + 1;
    }
    return parts;
}

std::vector<std::string_view> lines_of(std::string_view text)
{
    std::vector<std::string_view> out;
    for (auto part : split(text, '\n')) {
        if (!part.empty() && part.back() == '\r') {
            part.remove_suffix(1);
        }
        if (!part.empty()) {
            out.push_back(part);
        }
    }
    return out;
}

void require_structured(const Mesh& mesh, std::span<const double> values, const char* who)
{
    if (!mesh.is_structured()) {
        throw std::invalid_argument(std::string(who) + ": mesh is not structured");
    }
    if (values.size() != mesh.num_nodes()) {
        throw std::invalid_argument(std::string(who) + ": field length differs from node count");
    }
}

}  // namespace

void write_text_file(const std::filesystem::path& path, std::string_view contents)
{
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    }
    os.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!os) {
        throw std::runtime_error("write to '" + path.string() + "' failed");
    }
}

std::string read_text_file(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw std::runtime_error("cannot open '" + path.string() + "' for reading");
    }
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::string format_field_csv(const FeFunction& f, const Mesh& mesh, double time)
{
    require_structured(mesh, f.values, "write_field_csv");
    std::string out = "# n=" + std::to_string(mesh.structured_n()) + " time=" + format_real(time) + "\n";
    const auto nodes = mesh.nodes();
    for (Index i = 0; i < nodes.size(); ++i) {
        out += format_real(nodes[i].x);
        out += ',';
        out += format_real(nodes[i].y);
        out += ',';
        out += format_real(f.values[i]);
        out += '\n';
    }
    return out;
}

void write_field_csv(const FeFunction& f, const Mesh& mesh, const std::filesystem::path& path,
                     double time)
{
    write_text_file(path, format_field_csv(f, mesh, time));
}

FieldSnapshot parse_field_csv(std::string_view text)
{
    const auto lines = lines_of(text);
    if (lines.empty() || !lines.front().starts_with("# n=")) {
        throw std::runtime_error("field csv: missing '# n=' header");
    }
    FieldSnapshot snap;
    const std::string_view header = lines.front().substr(2);
    for (auto token : split(header, ' ')) {
        if (token.starts_with("n=")) {
            const auto digits = token.substr(2);
            const auto res = std::from_chars(digits.data(), digits.data() + digits.size(), snap.n);
            if (res.ec != std::errc{} || res.ptr != digits.data() + digits.size()) {
                throw std::runtime_error("field csv: malformed n");
            }
        } else if (token.starts_with("time=")) {
            snap.time = parse_real(token.substr(5));
        }
    }
    const Index expected = (snap.n + 1) * (snap.n + 1);
    if (snap.n < 1 || lines.size() != expected + 1) {
        throw std::runtime_error("field csv: expected " + std::to_string(expected) + " value lines");
    }
    snap.values.reserve(expected);
    for (Index i = 1; i < lines.size(); ++i) {
        const auto cols = split(lines[i], ',');
        if (cols.size() != 3) {
            throw std::runtime_error("field csv: expected 'x,y,value' on line " + std::to_string(i + 1));
        }
        snap.values.push_back(parse_real(cols[2]));
    }
    return snap;
}

FieldSnapshot read_field_csv(const std::filesystem::path& path)
{
    return parse_field_csv(read_text_file(path));
}

std::string format_field_pgm(const FeFunction& f, const Mesh& mesh, double lo, double hi)
{
    require_structured(mesh, f.values, "write_field_pgm");
    if (!(lo < hi)) {
        throw std::invalid_argument("write_field_pgm: lo must be below hi");
    }
    const Index side = mesh.structured_n() + 1;
    std::string out = "P2\n" + std::to_string(side) + " " + std::to_string(side) + "\n255\n";
    for (Index r = 0; r < side; ++r) {
        const Index j = side - 1 - r;
        for (Index i = 0; i < side; ++i) {
            const double v = f.values[j * side + i];
            const double s = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
            const long pixel = std::lround(255.0 * s);
            if (i > 0) {
                out += ' ';
            }
            out += std::to_string(pixel);
        }
        out += '\n';
    }
    return out;
}

void write_field_pgm(const FeFunction& f, const Mesh& mesh, const std::filesystem::path& path,
                     double lo, double hi)
{
    write_text_file(path, format_field_pgm(f, mesh, lo, hi));
}

void Table::add_row(std::initializer_list<double> values)
{
    std::vector<std::string> cells;
    cells.reserve(values.size());
    for (double v : values) {
        cells.push_back(format_real(v));
    }
    rows.push_back(std::move(cells));
}

double Table::number(Index row, Index col) const
{
    return parse_real(rows.at(row).at(col));
}

std::string format_table_csv(const Table& table)
{
    std::string out;
    for (Index c = 0; c < table.columns.size(); ++c) {
        if (c > 0) {
            out += ',';
        }
        out += table.columns[c];
    }
    out += '\n';
    for (const auto& row : table.rows) {
        if (row.size() != table.columns.size()) {
            throw std::invalid_argument("table csv: row width differs from header");
        }
        for (Index c = 0; c < row.size(); ++c) {
            if (c > 0) {
                out += ',';
            }
            out += row[c];
        }
        out += '\n';
    }
    return out;
}

void write_table_csv(const Table& table, const std::filesystem::path& path)
{
    write_text_file(path, format_table_csv(table));
}

Table parse_table_csv(std::string_view text)
{
    const auto lines = lines_of(text);
    if (lines.empty()) {
        throw std::runtime_error("table csv: empty input");
    }
    Table t;
    for (auto c : split(lines.front(), ',')) {
        t.columns.emplace_back(c);
    }
    for (Index i = 1; i < lines.size(); ++i) {
        const auto cols = split(lines[i], ',');
        if (cols.size() != t.columns.size()) {
            throw std::runtime_error("table csv: ragged row " + std::to_string(i + 1));
        }
        std::vector<std::string> row(cols.begin(), cols.end());
        t.rows.push_back(std::move(row));
    }
    return t;
}

std::string format_energy_csv(const TrajectoryRecord& rec)
{
    Table t;
    t.columns = {"step", "time", "tv_eps", "tv", "fidelity", "total", "increment_sq",
                 "nonlinear_iters"};
    t.rows.reserve(rec.energies.size());
    for (Index i = 0; i < rec.energies.size(); ++i) {
        const EnergyBreakdown& e = rec.energies[i];
        t.add_row({static_cast<double>(i), rec.times.at(i), e.tv_eps, e.tv, e.fidelity, e.total,
                   rec.step_increments.at(i), static_cast<double>(rec.nonlinear_iters.at(i))});
    }
    return format_table_csv(t);
}

void write_energy_csv(const TrajectoryRecord& rec, const std::filesystem::path& path)
{
    write_text_file(path, format_energy_csv(rec));
}

}  // namespace stvf
