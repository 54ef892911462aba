#include "metarx/io.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

namespace metarx {

using nlohmann::json;

namespace {

json state_to_json(const ChannelState& state) {
    json j;
    if (std::holds_alternative<DemodChannelState>(state)) {
        const auto& s = std::get<DemodChannelState>(state);
        j["kind"] = "demod";
        j["eps"] = s.eps;
        j["delta"] = s.delta;
        j["h"] = {s.h.real(), s.h.imag()};
    } else {
        const auto& s = std::get<EqChannelState>(state);
        j["kind"] = "eq";
        j["c"] = {s.c[0], s.c[1]};
    }
    return j;
}

ChannelState state_from_json(const json& j) {
    if (j.at("kind") == "demod") {
        DemodChannelState s;
        s.eps = j.at("eps").get<double>();
        s.delta = j.at("delta").get<double>();
        s.h = {j.at("h")[0].get<double>(), j.at("h")[1].get<double>()};
        return s;
    }
    EqChannelState s;
    s.c = Eigen::Vector2d(j.at("c")[0].get<double>(), j.at("c")[1].get<double>());
    return s;
}

json samples_to_json(const std::vector<Sample>& xs) {
    json arr = json::array();
    for (const Sample& s : xs) arr.push_back({s.y[0], s.y[1], s.x_idx});
    return arr;
}

std::vector<Sample> samples_from_json(const json& arr) {
    std::vector<Sample> xs;
    xs.reserve(arr.size());
    for (const auto& row : arr) {
        Sample s;
        s.y = Eigen::Vector2d(row[0].get<double>(), row[1].get<double>());
        s.x_idx = row[2].get<int>();
        xs.push_back(s);
    }
    return xs;
}

json shape_to_json(const ModelShape& s) {
    return {{"input", s.input},
            {"hidden", s.hidden},
            {"output", s.output},
            {"bias", s.bias},
            {"relu_hidden", s.relu_hidden}};
}

ModelShape shape_from_json(const json& j) {
    ModelShape s;
    s.input = j.at("input").get<int>();
    s.hidden = j.at("hidden").get<std::vector<int>>();
    s.output = j.at("output").get<int>();
    s.bias = j.at("bias").get<bool>();
    s.relu_hidden = j.at("relu_hidden").get<bool>();
    return s;
}

std::vector<double> to_std(const Eigen::VectorXd& v) {
    return {v.data(), v.data() + v.size()};
}

Eigen::VectorXd from_std(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    // trim to the shortest form that round-trips
    for (int prec = 1; prec < 17; ++prec) {
        char shorter[40];
        std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
        if (std::strtod(shorter, nullptr) == v) return shorter;
    }
    return buf;
}

void write_frames_jsonl(const std::filesystem::path& path,
                        const std::vector<FrameDataset>& frames) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    for (const FrameDataset& f : frames) {
        json j;
        j["state"] = state_to_json(f.state);
        j["snr"] = f.snr;
        j["train"] = samples_to_json(f.train);
        j["test"] = samples_to_json(f.test);
        out << j.dump() << "\n";
    }
}

std::vector<FrameDataset> read_frames_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<FrameDataset> frames;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        FrameDataset f;
        f.state = state_from_json(j.at("state"));
        f.snr = j.at("snr").get<double>();
        f.train = samples_from_json(j.at("train"));
        f.test = samples_from_json(j.at("test"));
        frames.push_back(std::move(f));
    }
    return frames;
}

void write_checkpoint(const std::filesystem::path& path, const Hyperparams& xi,
                      std::uint64_t seed, const std::string& config_hash) {
    json j;
    j["variant"] = xi.kind == Hyperparams::Kind::Freq ? "freq" : "bayes";
    j["nu"] = to_std(xi.nu);
    j["rho"] = to_std(xi.rho);
    j["shape"] = shape_to_json(xi.shape);
    j["meta"] = {{"seed", seed}, {"config_hash", config_hash}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << j.dump(2) << "\n";
}

Hyperparams read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    json j = json::parse(in);
    Hyperparams xi;
    xi.kind = j.at("variant") == "freq" ? Hyperparams::Kind::Freq : Hyperparams::Kind::Bayes;
    xi.nu = from_std(j.at("nu").get<std::vector<double>>());
    xi.rho = from_std(j.at("rho").get<std::vector<double>>());
    xi.shape = shape_from_json(j.at("shape"));
    return xi;
}

void write_demod_predictions(const std::filesystem::path& path,
                             const std::vector<DemodPrediction>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "frame_id,sample_id,truth_idx,pred_idx,confidence\n";
    for (const DemodPrediction& r : rows)
        out << r.frame_id << ',' << r.sample_id << ',' << r.truth_idx << ',' << r.pred_idx << ','
            << format_double(r.confidence) << "\n";
}

void write_eq_predictions(const std::filesystem::path& path,
                          const std::vector<EqPrediction>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "frame_id,sample_id,truth,pred_mean\n";
    for (const EqPrediction& r : rows)
        out << r.frame_id << ',' << r.sample_id << ',' << format_double(r.truth) << ','
            << format_double(r.pred_mean) << "\n";
}

PredictionFile read_predictions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string header;
    if (!std::getline(in, header)) throw std::runtime_error("empty prediction file");
    PredictionFile file;
    file.kind = header.find("truth_idx") != std::string::npos ? TaskKind::Demod
                                                              : TaskKind::Equalize;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (file.kind == TaskKind::Demod) {
            if (cells.size() != 5) throw std::runtime_error("bad demod prediction row");
            file.demod.push_back({std::stoi(cells[0]), std::stoi(cells[1]), std::stoi(cells[2]),
                                  std::stoi(cells[3]), std::stod(cells[4])});
        } else {
            if (cells.size() != 4) throw std::runtime_error("bad equalizer prediction row");
            file.eq.push_back(
                {std::stoi(cells[0]), std::stoi(cells[1]), std::stod(cells[2]),
                 std::stod(cells[3])});
        }
    }
    return file;
}

}  // namespace metarx
