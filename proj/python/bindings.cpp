#include "mpsim/app.hpp"
#include "mpsim/ccontrol.hpp"
#include "mpsim/errors.hpp"
#include "mpsim/scenario.hpp"
#include "mpsim/wire.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <vector>

namespace py = pybind11;
using namespace mpsim;

namespace
{
    CcAlgorithm make_algorithm(const std::string &name, double a, const std::string &second_term)
    {
        const auto kind = cc_kind_from_string(name);
        if (!kind)
        {
            throw py::value_error("unknown algorithm '" + name + "'");
        }
        const auto term = rttc_second_term_from_string(second_term);
        if (!term)
        {
            throw py::value_error("rttc_second_term must be 'total' or 'per_path'");
        }
        return CcAlgorithm{*kind, a, *term};
    }

    void check_view(const std::vector<double> &windows, std::size_t r)
    {
        if (r >= windows.size())
        {
            throw py::index_error("subflow index out of range");
        }
    }

    py::dict summary_dict(const ScenarioResult &r)
    {
        py::dict d;
        d["exit_code"] = r.exit_code;
        d["error"] = r.error;
        d["completed"] = r.completed;
        d["fallback"] = r.fallback;
        d["finish_time_us"] = r.finish_time ? py::object(py::int_(*r.finish_time)) : py::object(py::none());
        d["goodput_bps"] = r.goodput_bps;
        d["received_bytes"] = r.received_bytes;
        d["source_checksum"] = r.source_checksum;
        d["sink_checksum"] = r.sink_checksum;
        d["events_processed"] = r.events_processed;
        py::list subflows;
        for (const auto &s : r.subflows)
        {
            py::dict sd;
            sd["id"] = s.id;
            sd["path"] = s.local + "->" + s.remote;
            sd["bytes_sent"] = s.stats.bytes_sent;
            sd["retransmissions"] = s.stats.retransmissions;
            sd["spurious_detections"] = s.stats.spurious_detections;
            sd["timeouts"] = s.stats.timeouts;
            sd["final_cwnd"] = s.final_cwnd;
            subflows.append(sd);
        }
        d["subflows"] = subflows;
        d["summary"] = format_summary(r);
        d["trace_csv"] = r.trace.to_csv();
        return d;
    }
} // namespace

PYBIND11_MODULE(_mpsim, m)
{
    m.doc() = "Deterministic multipath TCP simulator";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<MalformedSegment>(m, "MalformedSegment", PyExc_ValueError);
    py::register_exception<InvariantBreach>(m, "InvariantBreach", PyExc_RuntimeError);

    m.attr("TRACE_HEADER") = std::string(kTraceHeader);

    py::class_<ScenarioConfig>(m, "ScenarioConfig")
        .def(py::init<>())
        .def("set", [](ScenarioConfig &c, const std::string &key, const std::string &value) {
            apply_setting(c, key, value);
        }, py::arg("key"), py::arg("value"), "Apply one global key as the CLI would.")
        .def_property_readonly("links", [](const ScenarioConfig &c) { return c.links.size(); })
        .def_property_readonly("cc", [](const ScenarioConfig &c) { return std::string(to_string(c.cc.kind)); })
        .def_property_readonly("a", [](const ScenarioConfig &c) { return c.cc.a; })
        .def_property_readonly("reorder", [](const ScenarioConfig &c) { return std::string(to_string(c.reorder)); })
        .def_readonly("mss", &ScenarioConfig::mss)
        .def_readonly("rwnd", &ScenarioConfig::rwnd)
        .def_readonly("dupthresh", &ScenarioConfig::dupthresh)
        .def_readonly("file_size", &ScenarioConfig::file_size)
        .def_readonly("seed", &ScenarioConfig::seed)
        .def_readonly("sim_time_limit_us", &ScenarioConfig::sim_time_limit)
        .def("link", [](const ScenarioConfig &c, std::size_t i) {
            if (i >= c.links.size())
            {
                throw py::index_error("link index out of range");
            }
            const auto &l = c.links[i];
            py::list schedule;
            for (const auto &s : l.delay.steps())
            {
                schedule.append(py::make_tuple(s.from, s.delay));
            }
            py::dict d;
            d["bandwidth_bps"] = l.bandwidth_bps;
            d["loss_rate"] = l.loss_rate;
            d["delay_schedule_us"] = schedule;
            return d;
        }, py::arg("index"));

    m.def("parse_config", &parse_config, py::arg("text"), "Parse scenario text; raises ConfigError.");
    m.def("load_config", &load_config_file, py::arg("path"));

    m.def("run_scenario", [](const ScenarioConfig &config, bool server_mp_capable) {
        RunOptions opt;
        opt.server_mp_capable = server_mp_capable;
        ScenarioResult r;
        {
            py::gil_scoped_release release;
            r = run_scenario(config, opt);
        }
        return summary_dict(r);
    }, py::arg("config"), py::arg("server_mp_capable") = true,
          "Run a scenario; returns a dict with the summary, subflow stats and trace_csv.");

    m.def("cc_on_ack", [](const std::string &alg, const std::vector<double> &windows, std::size_t r, double a,
                          const std::string &second_term) {
        check_view(windows, r);
        return cc_on_ack(make_algorithm(alg, a, second_term), ConnectionWindowView{windows}, r);
    }, py::arg("alg"), py::arg("windows"), py::arg("r"), py::arg("a") = 1.0, py::arg("rttc_second_term") = "total");

    m.def("cc_on_loss", [](const std::string &alg, const std::vector<double> &windows, std::size_t r) {
        check_view(windows, r);
        return cc_on_loss(make_algorithm(alg, 1.0, "total"), ConnectionWindowView{windows}, r);
    }, py::arg("alg"), py::arg("windows"), py::arg("r"));

    m.def("pattern_checksum", &pattern_checksum, py::arg("total_bytes"));

    m.def("roundtrip_data_segment", [](std::uint64_t data_seq, std::uint32_t subflow_seq, py::bytes payload) {
        const std::string raw = payload;
        Segment s;
        s.src_addr = {0, 0};
        s.dst_addr = {1, 0};
        s.flags = kAck;
        s.seq = subflow_seq;
        s.payload.assign(raw.begin(), raw.end());
        s.options.push_back(DataSeqMap{data_seq, subflow_seq, static_cast<std::uint32_t>(raw.size())});
        const auto bytes = encode(s);
        const auto back = decode(bytes);
        const auto *map = back.find<DataSeqMap>();
        return py::make_tuple(py::bytes(reinterpret_cast<const char *>(bytes.data()), bytes.size()),
                              back == s, map ? map->data_seq : 0);
    }, py::arg("data_seq"), py::arg("subflow_seq"), py::arg("payload"),
          "Encode and decode a data segment; returns (wire bytes, equal, decoded data_seq).");

    m.def("decode_check", [](py::bytes data) {
        const std::string raw = data;
        decode(std::vector<std::uint8_t>(raw.begin(), raw.end()));
        return true;
    }, py::arg("data"), "Decode wire bytes; raises MalformedSegment when invalid.");
}
