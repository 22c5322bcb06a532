#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cfdr/harness.hpp"

namespace cfdr {

using nlohmann::json;

namespace {

const char* const grid_header =
    "env,pi_b,pi_e,estimator,eps,delta,rmse,bias,std,se_rmse,se_bias,se_std,trials";

std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                fields.back() += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                fields.back() += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.emplace_back();
        } else {
            fields.back() += c;
        }
    }
    if (quoted) throw IoError("unterminated quote in CSV line");
    return fields;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << text;
    if (!out) throw IoError("failed writing '" + path + "'");
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void require_rows(const GridResult& r) {
    if (r.rows.empty()) throw InvalidArgument("grid result has no rows");
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& text) {
    double v = 0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size())
        throw IoError("not a number: '" + text + "'");
    return v;
}

std::string grid_to_csv(const GridResult& result) {
    require_rows(result);
    std::string out = std::string(grid_header) + "\n";
    for (const auto& r : result.rows) {
        out += quote(r.env) + ',' + quote(r.pi_b) + ',' + quote(r.pi_e) + ',' + quote(r.estimator);
        for (double v : {r.eps, r.delta, r.rmse, r.bias, r.std, r.se_rmse, r.se_bias, r.se_std})
            out += ',' + format_double(v);
        out += ',' + std::to_string(r.trials) + '\n';
    }
    return out;
}

GridResult grid_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != grid_header) throw IoError("unexpected CSV header");
    GridResult result;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 13) throw IoError("CSV row has " + std::to_string(f.size()) + " fields");
        GridRow r{f[0], f[1], f[2], f[3],
                  parse_double(f[4]), parse_double(f[5]), parse_double(f[6]), parse_double(f[7]),
                  parse_double(f[8]), parse_double(f[9]), parse_double(f[10]), parse_double(f[11]),
                  0};
        const auto res = std::from_chars(f[12].data(), f[12].data() + f[12].size(), r.trials);
        if (res.ec != std::errc()) throw IoError("bad trial count '" + f[12] + "'");
        result.rows.push_back(std::move(r));
    }
    return result;
}

std::string grid_to_json(const GridResult& result) {
    require_rows(result);
    json arr = json::array();
    for (const auto& r : result.rows)
        arr.push_back({{"env", r.env}, {"pi_b", r.pi_b}, {"pi_e", r.pi_e}, {"estimator", r.estimator},
                       {"eps", r.eps}, {"delta", r.delta}, {"rmse", r.rmse}, {"bias", r.bias},
                       {"std", r.std}, {"se_rmse", r.se_rmse}, {"se_bias", r.se_bias},
                       {"se_std", r.se_std}, {"trials", r.trials}});
    return arr.dump(1) + "\n";
}

GridResult grid_from_json(const std::string& text) {
    GridResult result;
    try {
        for (const auto& o : json::parse(text))
            result.rows.push_back({o.at("env"), o.at("pi_b"), o.at("pi_e"), o.at("estimator"),
                                   o.at("eps"), o.at("delta"), o.at("rmse"), o.at("bias"),
                                   o.at("std"), o.at("se_rmse"), o.at("se_bias"), o.at("se_std"),
                                   o.at("trials")});
    } catch (const json::exception& e) {
        throw IoError(std::string("bad grid JSON: ") + e.what());
    }
    return result;
}

std::string delta_to_csv(const DeltaResult& result) {
    if (result.rows.empty()) throw InvalidArgument("delta result has no rows");
    std::string out = "env,eps,delta,mean_delta,var_delta,baseline,samples,reward_range\n";
    for (const auto& r : result.rows)
        out += quote(r.env) + ',' + format_double(r.eps) + ',' + format_double(r.delta) + ',' +
               format_double(r.mean_delta) + ',' + format_double(r.var_delta) + ',' +
               quote(r.baseline) + ',' + std::to_string(r.samples) + ',' +
               format_double(result.reward_range) + '\n';
    return out;
}

void export_grid(const GridResult& result, const std::string& path, const std::string& format) {
    if (format == "csv") write_file(path, grid_to_csv(result));
    else if (format == "json") write_file(path, grid_to_json(result));
    else throw InvalidArgument("unknown export format '" + format + "'");
}

void export_delta(const DeltaResult& result, const std::string& path) {
    write_file(path, delta_to_csv(result));
}

GridResult import_grid(const std::string& path) {
    const std::string text = read_file(path);
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '[') return grid_from_json(text);
    return grid_from_csv(text);
}

}  // namespace cfdr
