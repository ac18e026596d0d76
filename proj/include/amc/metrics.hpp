#ifndef AMC_METRICS_HPP
#define AMC_METRICS_HPP

#include <cstdint>
#include <fstream>
#include <memory>
#include <ostream>
#include <string>

#include "json.hpp"

#include "amc/error.hpp"

namespace amc {

struct MetricRecord {
    std::uint64_t step = 0;  // episodes processed so far
    std::string split;       // train | val | test
    double loss = 0.0;
    double accuracy = 0.0;  // percent
    double ci95 = 0.0;      // percent
    double lr = 0.0;
    double wall_ms = 0.0;  // stays 0.0 unless timing was requested, so streams are reproducible
};

// Newline-delimited JSON sink. A default-constructed sink swallows records;
// file and stream targets can be combined (file plus stdout echo).
class MetricSink {
  public:
    MetricSink() = default;

    static MetricSink to_file(const std::string& path, std::ostream* echo = nullptr) {
        MetricSink s;
        s.file_ = std::make_shared<std::ofstream>(path);
        if (!*s.file_) throw DataError("cannot open metrics file '" + path + "'");
        s.echo_ = echo;
        return s;
    }

    static MetricSink to_stream(std::ostream& out) {
        MetricSink s;
        s.echo_ = &out;
        return s;
    }

    void write(const MetricRecord& r) {
        if (!file_ && echo_ == nullptr) return;
        nlohmann::ordered_json j{{"step", r.step},   {"split", r.split}, {"loss", r.loss}, {"accuracy", r.accuracy},
                                 {"ci95", r.ci95},   {"lr", r.lr},       {"wall_ms", r.wall_ms}};
        const std::string line = j.dump();
        if (file_) {
            *file_ << line << '\n';
            file_->flush();
        }
        if (echo_ != nullptr) *echo_ << line << '\n';
    }

  private:
    std::shared_ptr<std::ofstream> file_;
    std::ostream* echo_ = nullptr;
};

}  // namespace amc

#endif
