#pragma once

#include <Eigen/Dense>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "funcspace.hpp"

namespace rfpc {

inline constexpr const char* kToolVersion = "0.1.0";

namespace io {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) {
        const auto b = field.find_first_not_of(" \t\r");
        const auto e = field.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string() : field.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline double parse_number(const std::string& s, long line_no) {
    if (s.empty()) throw ParseError("empty numeric cell", line_no);
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || errno == ERANGE)
        throw ParseError("non-numeric cell '" + s + "'", line_no);
    return v;
}

inline std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace io

/// Curves read from CSV, with the affine map that took the declared grid to
/// [0,1] recorded (t01 = (t - offset) / scale).
struct CurvesFile {
    FunctionalSample sample;
    std::vector<std::string> ids;
    double t_offset = 0.0;
    double t_scale = 1.0;
};

/// CSV layout: header `t,<grid points...>`, one row `id,<p values>` per
/// curve.  The grid is rescaled affinely to [0,1].
inline CurvesFile read_curves(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open curves file: " + path);
    std::string line;
    long line_no = 0;

    if (!std::getline(in, line)) throw ParseError("empty curves file", 1);
    ++line_no;
    auto header = io::split_csv_line(line);
    if (header.size() < 2 || header[0] != "t")
        throw ParseError("curves header must be 't,<grid points...>'", line_no);
    const auto p = static_cast<Eigen::Index>(header.size() - 1);
    VectorXd t(p);
    for (Eigen::Index k = 0; k < p; ++k) {
        t[k] = io::parse_number(header[static_cast<std::size_t>(k + 1)], line_no);
        if (k > 0 && !(t[k] > t[k - 1]))
            throw ParseError("grid is not strictly increasing at column " + std::to_string(k + 1),
                             line_no);
    }

    const double offset = t[0];
    const double scale = t[p - 1] - t[0];
    if (!(scale > 0.0)) throw ParseError("grid has zero span", line_no);
    VectorXd t01 = (t.array() - offset) / scale;
    t01[0] = 0.0;
    t01[p - 1] = 1.0;
    GridPtr grid = std::make_shared<const Grid>(std::move(t01));

    std::vector<std::string> ids;
    std::vector<VectorXd> rows;
    std::unordered_set<std::string> seen;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto cells = io::split_csv_line(line);
        if (static_cast<Eigen::Index>(cells.size()) != p + 1)
            throw ParseError("expected " + std::to_string(p + 1) + " cells, found " +
                                 std::to_string(cells.size()),
                             line_no);
        if (!seen.insert(cells[0]).second)
            throw ParseError("duplicate curve id '" + cells[0] + "'", line_no);
        ids.push_back(cells[0]);
        VectorXd v(p);
        for (Eigen::Index k = 0; k < p; ++k)
            v[k] = io::parse_number(cells[static_cast<std::size_t>(k + 1)], line_no);
        rows.push_back(std::move(v));
    }
    if (rows.empty()) throw ParseError("no curves in file", line_no);

    MatrixXd m(static_cast<Eigen::Index>(rows.size()), p);
    for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i) = rows[static_cast<std::size_t>(i)];
    return {FunctionalSample(grid, std::move(m)), std::move(ids), offset, scale};
}

/// Companion response file: header `id,y`, one row per id.  The returned
/// vector is ordered like `ids`.
inline VectorXd read_response(const std::string& path, const std::vector<std::string>& ids) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open response file: " + path);
    std::string line;
    long line_no = 0;
    if (!std::getline(in, line)) throw ParseError("empty response file", 1);
    ++line_no;
    auto header = io::split_csv_line(line);
    if (header.size() != 2 || header[0] != "id" || header[1] != "y")
        throw ParseError("response header must be 'id,y'", line_no);

    std::unordered_map<std::string, double> by_id;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto cells = io::split_csv_line(line);
        if (cells.size() != 2) throw ParseError("expected 2 cells", line_no);
        if (by_id.count(cells[0])) throw ParseError("duplicate id '" + cells[0] + "'", line_no);
        by_id[cells[0]] = io::parse_number(cells[1], line_no);
    }
    VectorXd y(static_cast<Eigen::Index>(ids.size()));
    for (std::size_t i = 0; i < ids.size(); ++i) {
        auto it = by_id.find(ids[i]);
        if (it == by_id.end())
            throw Error("response file misses id '" + ids[i] + "'");
        y[static_cast<Eigen::Index>(i)] = it->second;
    }
    return y;
}

inline void write_curves(const std::string& path, const FunctionalSample& sample,
                         const std::vector<std::string>& ids) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write curves file: " + path);
    out << "t";
    for (Eigen::Index k = 0; k < sample.p(); ++k)
        out << ',' << io::format_number(sample.grid->points()[k]);
    out << '\n';
    for (Eigen::Index i = 0; i < sample.n(); ++i) {
        out << ids[static_cast<std::size_t>(i)];
        for (Eigen::Index k = 0; k < sample.p(); ++k)
            out << ',' << io::format_number(sample.rows(i, k));
        out << '\n';
    }
}

inline void write_response(const std::string& path, const VectorXd& y,
                           const std::vector<std::string>& ids) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write response file: " + path);
    out << "id,y\n";
    for (Eigen::Index i = 0; i < y.size(); ++i)
        out << ids[static_cast<std::size_t>(i)] << ',' << io::format_number(y[i]) << '\n';
}

}  // namespace rfpc
