#include "ssm/io.hpp"

#include "ssm/errors.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace ssm {

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open file: " + path.string());
    }
    return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write file: " + path.string());
    }
    return out;
}

double parse_double(const std::string& token, const std::filesystem::path& path, std::size_t line) {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0' || errno == ERANGE) {
        std::ostringstream os;
        os << path.string() << ":" << line << ": non-numeric token '" << token << "'";
        throw DataError(os.str());
    }
    return v;
}

} // namespace

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

PointSet load_point_set(const std::filesystem::path& path) {
    std::ifstream in = open_input(path);
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    std::size_t dim = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::vector<double> row;
        std::string token;
        while (ls >> token) {
            row.push_back(parse_double(token, path, line_no));
        }
        if (row.empty()) {
            continue; // blank line
        }
        if (dim == 0) {
            dim = row.size();
        } else if (row.size() != dim) {
            std::ostringstream os;
            os << path.string() << ":" << line_no << ": inconsistent dimension, expected " << dim
               << " values, got " << row.size();
            throw DataError(os.str());
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) {
        throw DataError(path.string() + ": no points found");
    }
    return make_point_set(rows);
}

void save_point_set(const PointSet& ps, const std::filesystem::path& path) {
    std::ofstream out = open_output(path);
    for (Eigen::Index i = 0; i < ps.size(); ++i) {
        for (Eigen::Index j = 0; j < ps.dim(); ++j) {
            if (j) out << ' ';
            out << format_double(ps.pts(i, j));
        }
        out << '\n';
    }
}

LandmarkSet load_landmarks(const std::filesystem::path& path) {
    std::ifstream in = open_input(path);
    std::map<std::string, std::vector<Eigen::RowVector3d>> curves;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string name;
        if (!(ls >> name)) {
            continue;
        }
        Eigen::RowVector3d p;
        std::string token;
        for (int j = 0; j < 3; ++j) {
            if (!(ls >> token)) {
                std::ostringstream os;
                os << path.string() << ":" << line_no << ": landmark row needs name + 3 coordinates";
                throw DataError(os.str());
            }
            p[j] = parse_double(token, path, line_no);
        }
        if (std::string extra; ls >> extra) {
            std::ostringstream os;
            os << path.string() << ":" << line_no << ": trailing token '" << extra << "'";
            throw DataError(os.str());
        }
        curves[name].push_back(p);
    }
    LandmarkSet lm;
    for (const auto& [name, pts] : curves) {
        Eigen::MatrixXd m(static_cast<Eigen::Index>(pts.size()), 3);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            m.row(static_cast<Eigen::Index>(i)) = pts[i];
        }
        lm.curves[name] = std::move(m);
    }
    lm.validate();
    return lm;
}

void save_landmarks(const LandmarkSet& lm, const std::filesystem::path& path) {
    std::ofstream out = open_output(path);
    for (const auto& [name, pts] : lm.curves) {
        for (Eigen::Index i = 0; i < pts.rows(); ++i) {
            out << name;
            for (Eigen::Index j = 0; j < 3; ++j) {
                out << ' ' << format_double(pts(i, j));
            }
            out << '\n';
        }
    }
}

ScalarVolume load_volume(const std::filesystem::path& path) {
    std::ifstream in = open_input(path);
    std::string magic;
    std::getline(in, magic);
    if (magic != "SDTVOL1") {
        throw DataError(path.string() + ": missing SDTVOL1 magic line");
    }
    ScalarVolume vol;
    auto expect_key = [&](const std::string& key, auto& target, int count) {
        std::string got;
        if (!(in >> got) || got != key + ":") {
            throw DataError(path.string() + ": expected '" + key + ":' header line");
        }
        for (int a = 0; a < count; ++a) {
            if (!(in >> target[a])) {
                throw DataError(path.string() + ": malformed '" + key + "' values");
            }
        }
    };
    expect_key("dims", vol.dims, 3);
    expect_key("origin", vol.origin, 3);
    expect_key("spacing", vol.spacing, 3);
    if (vol.dims[0] < 1 || vol.dims[1] < 1 || vol.dims[2] < 1) {
        throw DataError(path.string() + ": dims must be positive");
    }
    const std::size_t count = static_cast<std::size_t>(vol.dims[0]) *
                              static_cast<std::size_t>(vol.dims[1]) *
                              static_cast<std::size_t>(vol.dims[2]);
    vol.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        if (!(in >> vol.values[i])) {
            std::ostringstream os;
            os << path.string() << ": expected " << count << " values, got " << i;
            throw DataError(os.str());
        }
    }
    vol.validate();
    return vol;
}

void save_volume(const ScalarVolume& vol, const std::filesystem::path& path) {
    vol.validate();
    std::ofstream out = open_output(path);
    out << "SDTVOL1\n";
    out << "dims: " << vol.dims[0] << ' ' << vol.dims[1] << ' ' << vol.dims[2] << '\n';
    out << "origin: " << format_double(vol.origin[0]) << ' ' << format_double(vol.origin[1]) << ' '
        << format_double(vol.origin[2]) << '\n';
    out << "spacing: " << format_double(vol.spacing[0]) << ' ' << format_double(vol.spacing[1])
        << ' ' << format_double(vol.spacing[2]) << '\n';
    // One x-row per line keeps files diffable without affecting parsing.
    std::size_t idx = 0;
    for (int k = 0; k < vol.dims[2]; ++k) {
        for (int j = 0; j < vol.dims[1]; ++j) {
            for (int i = 0; i < vol.dims[0]; ++i, ++idx) {
                if (i) out << ' ';
                out << format_double(vol.values[idx]);
            }
            out << '\n';
        }
    }
}

std::string csv_cell(double v) { return format_double(v); }

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out = open_output(path);
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (j) out << ',';
        out << header[j];
    }
    out << '\n';
    for (const auto& row : rows) {
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (j) out << ',';
            out << row[j];
        }
        out << '\n';
    }
}

} // namespace ssm
