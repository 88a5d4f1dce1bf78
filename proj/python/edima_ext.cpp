#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "edima/capture.hpp"
#include "edima/constructor.hpp"
#include "edima/error.hpp"
#include "edima/featuredb.hpp"
#include "edima/features.hpp"
#include "edima/ml.hpp"
#include "edima/pipeline.hpp"
#include "edima/policy.hpp"
#include "edima/sessionizer.hpp"
#include "edima/synth.hpp"

namespace py = pybind11;
using namespace edima;

namespace {

// Enums cross the boundary as their canonical strings.
template <typename T>
T parse_or_throw(std::optional<T> v, const std::string& what, const std::string& text) {
  if (!v) throw py::value_error("unknown " + what + ": " + text);
  return *v;
}
Category cat_arg(const std::string& s) { return parse_or_throw(parse_category(s), "category", s); }
Label label_arg(const std::string& s) { return parse_or_throw(parse_label(s), "label", s); }
Algorithm algo_arg(const std::string& s) { return parse_or_throw(parse_algorithm(s), "algorithm", s); }

py::object to_py(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}
nlohmann::json from_py(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

py::bytes pcap_bytes(const std::vector<PacketRecord>& recs) {
  const auto out = write_pcap(recs);
  return py::bytes(reinterpret_cast<const char*>(out.data()), out.size());
}

ParseResult parse_bytes(const py::bytes& data) {
  const std::string_view view = data;
  return parse_pcap(std::span(reinterpret_cast<const std::byte*>(view.data()), view.size()));
}

Dataset rows_arg(const py::list& rows) {
  Dataset out;
  for (const auto& r : rows) out.push_back(r.cast<FeatureVector>());
  return out;
}

Hyperparams hp_arg(int k, int trees) {
  Hyperparams hp;
  hp.k = k;
  hp.trees = trees;
  return hp;
}

}  // namespace

PYBIND11_MODULE(_edima, m) {
  m.doc() = "IoT gateway scan detection: capture, features, models, policy";

  // Error codes surface as the `code` attribute of EdimaError.
  static PyObject* error_type =
      PyErr_NewException("edima._edima.EdimaError", PyExc_ValueError, nullptr);
  m.attr("EdimaError") = py::handle(error_type);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error_type)(e.what());
      exc.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(error_type, exc.ptr());
    }
  });

  py::class_<PacketRecord>(m, "PacketRecord")
      .def(py::init<>())
      .def(py::init([](std::int64_t ts, const std::string& src, const std::string& dst,
                       std::uint8_t proto, std::uint16_t sport, std::uint16_t dport,
                       std::uint8_t flags, std::uint32_t payload) {
             PacketRecord r;
             r.ts_micros = ts;
             r.src_ip = parse_or_throw(parse_ipv4(src), "address", src);
             r.dst_ip = parse_or_throw(parse_ipv4(dst), "address", dst);
             r.ip_proto = proto;
             r.src_port = sport;
             r.dst_port = dport;
             r.tcp_flags = flags;
             r.payload_len = payload;
             return r;
           }),
           py::arg("ts_micros"), py::arg("src"), py::arg("dst"), py::arg("ip_proto") = kProtoTcp,
           py::arg("src_port") = 0, py::arg("dst_port") = 0, py::arg("tcp_flags") = 0,
           py::arg("payload_len") = 0)
      .def_readwrite("ts_micros", &PacketRecord::ts_micros)
      .def_readwrite("ip_proto", &PacketRecord::ip_proto)
      .def_readwrite("src_port", &PacketRecord::src_port)
      .def_readwrite("dst_port", &PacketRecord::dst_port)
      .def_readwrite("tcp_flags", &PacketRecord::tcp_flags)
      .def_readwrite("payload_len", &PacketRecord::payload_len)
      .def_property_readonly("src", [](const PacketRecord& r) { return ipv4_to_string(r.src_ip); })
      .def_property_readonly("dst", [](const PacketRecord& r) { return ipv4_to_string(r.dst_ip); })
      .def("is_syn_probe", &PacketRecord::is_syn_probe)
      .def(py::self == py::self)
      .def("__repr__", [](const PacketRecord& r) {
        return "PacketRecord(" + std::to_string(r.ts_micros) + ", " + ipv4_to_string(r.src_ip) +
               ":" + std::to_string(r.src_port) + " -> " + ipv4_to_string(r.dst_ip) + ":" +
               std::to_string(r.dst_port) + ", proto=" + std::to_string(r.ip_proto) +
               ", flags=" + std::to_string(r.tcp_flags) + ")";
      });

  // capture
  m.def("write_pcap", &pcap_bytes, py::arg("records"));
  m.def("parse_pcap", [](const py::bytes& data) {
    auto r = parse_bytes(data);
    return py::make_tuple(r.records, r.skipped);
  }, py::arg("data"), "Returns (records, skipped_frames).");
  m.def("read_pcap_file", [](const std::filesystem::path& p) {
    auto r = read_pcap_file(p);
    return py::make_tuple(r.records, r.skipped);
  }, py::arg("path"));
  m.def("write_pcap_file", [](const std::filesystem::path& p, const std::vector<PacketRecord>& recs) {
    write_pcap_file(p, recs);
  }, py::arg("path"), py::arg("records"));

  // sessionizer
  py::class_<TrafficSession>(m, "TrafficSession")
      .def_readonly("gateway_id", &TrafficSession::gateway_id)
      .def_readonly("window_start_us", &TrafficSession::window_start_micros)
      .def_readonly("window_len_us", &TrafficSession::window_len_micros)
      .def_readonly("packets", &TrafficSession::packets);

  m.def("target_ports", [](const std::string& c) {
    const auto p = default_target_ports(cat_arg(c));
    return std::vector<std::uint16_t>(p.ports.begin(), p.ports.end());
  }, py::arg("category"));
  m.def("slice_sessions", [](const std::vector<PacketRecord>& recs, const std::string& gw,
                             double window_secs) {
    return slice_sessions(recs, gw, static_cast<std::int64_t>(window_secs * 1e6));
  }, py::arg("records"), py::arg("gateway_id"), py::arg("window_secs") = 900.0);
  m.def("filter_session", [](const TrafficSession& s, const std::string& c) {
    return filter_session(s, default_target_ports(cat_arg(c)));
  }, py::arg("session"), py::arg("category"));
  m.def("subsample", [](const TrafficSession& s, double p, std::uint64_t seed) {
    return subsample(s, p, std::nullopt, seed);
  }, py::arg("session"), py::arg("p"), py::arg("seed"));

  // features
  py::class_<FeatureVector>(m, "FeatureVector")
      .def(py::init([](std::uint64_t f1, std::uint64_t f2, std::uint64_t f3, double f4,
                       const std::string& c, std::optional<std::string> label) {
             FeatureVector fv;
             fv.f1_unique_dsts = f1;
             fv.f2_max_pkts_per_dst = f2;
             fv.f3_min_pkts_per_dst = f3;
             fv.f4_mean_pkts_per_dst = f4;
             fv.category = cat_arg(c);
             if (label) fv.label = label_arg(*label);
             return fv;
           }),
           py::arg("f1"), py::arg("f2"), py::arg("f3"), py::arg("f4"),
           py::arg("category") = "telnet", py::arg("label") = py::none())
      .def_readonly("f1", &FeatureVector::f1_unique_dsts)
      .def_readonly("f2", &FeatureVector::f2_max_pkts_per_dst)
      .def_readonly("f3", &FeatureVector::f3_min_pkts_per_dst)
      .def_readonly("f4", &FeatureVector::f4_mean_pkts_per_dst)
      .def_readwrite("gateway", &FeatureVector::gateway)
      .def_readwrite("window_start_us", &FeatureVector::window_start_us)
      .def_property_readonly("category", [](const FeatureVector& f) { return std::string(to_string(f.category)); })
      .def_property(
          "label",
          [](const FeatureVector& f) -> std::optional<std::string> {
            if (!f.label) return std::nullopt;
            return std::string(to_string(*f.label));
          },
          [](FeatureVector& f, std::optional<std::string> l) {
            f.label = l ? std::optional(label_arg(*l)) : std::nullopt;
          })
      .def("values", &FeatureVector::values)
      .def("to_dict", [](const FeatureVector& f) { return to_py(to_json(f)); })
      .def_static("from_dict", [](const py::object& o) { return feature_vector_from_json(from_py(o)); })
      .def(py::self == py::self)
      .def("__repr__", [](const FeatureVector& f) { return "FeatureVector(" + to_json(f).dump() + ")"; });

  m.def("extract_features", [](const TrafficSession& s, const std::string& c) {
    return extract_features(s, cat_arg(c));
  }, py::arg("session"), py::arg("category"));

  // ml
  py::class_<TrainedModel>(m, "Model")
      .def_property_readonly("algorithm", [](const TrainedModel& t) { return std::string(to_string(t.algorithm)); })
      .def_property_readonly("category", [](const TrainedModel& t) { return std::string(to_string(t.category)); })
      .def("predict", [](const TrainedModel& t, const FeatureVector& fv) {
        const auto p = predict(t, fv);
        return py::make_tuple(std::string(to_string(p.label)), p.score);
      }, py::arg("features"), "Returns (label, malicious_score).")
      .def("digest", &model_digest)
      .def("serialize", &serialize_model)
      .def_static("deserialize", [](const std::string& s) { return deserialize_model(s); })
      .def("save", [](const TrainedModel& t, const std::filesystem::path& p) { save_model(p, t); })
      .def_static("load", [](const std::filesystem::path& p) { return load_model(p); });

  m.def("train", [](const std::string& algo, const py::list& rows, int k, int trees, std::uint64_t seed) {
    return train(algo_arg(algo), rows_arg(rows), hp_arg(k, trees), seed);
  }, py::arg("algo"), py::arg("rows"), py::arg("k") = 5, py::arg("trees") = 100, py::arg("seed") = 0);

  m.def("compute_metrics", [](const std::vector<std::string>& pred, const std::vector<std::string>& truth) {
    std::vector<Label> p, t;
    for (const auto& s : pred) p.push_back(label_arg(s));
    for (const auto& s : truth) t.push_back(label_arg(s));
    return to_py(to_json(compute_metrics(p, t)));
  }, py::arg("predicted"), py::arg("truth"));
  m.def("metrics_from_counts", [](std::uint64_t tp, std::uint64_t fp, std::uint64_t fn, std::uint64_t tn) {
    return to_py(to_json(metrics_from_counts(tp, fp, fn, tn)));
  }, py::arg("tp"), py::arg("fp"), py::arg("fn"), py::arg("tn"));
  m.def("f1_score", &f1_score, py::arg("precision"), py::arg("recall"));

  // constructor
  m.def("split", [](const py::list& rows, double frac, std::uint64_t seed) {
    SplitSpec spec;
    spec.train_fraction = frac;
    spec.seed = seed;
    auto r = split(rows_arg(rows), spec);
    return py::make_tuple(r.train, r.test);
  }, py::arg("rows"), py::arg("train_fraction") = 0.7, py::arg("seed") = 0);
  m.def("build", [](const std::string& algo, const py::list& rows, double frac, int k, int trees,
                    std::uint64_t seed) {
    SplitSpec spec;
    spec.train_fraction = frac;
    spec.seed = seed;
    auto r = build(algo_arg(algo), rows_arg(rows), spec, hp_arg(k, trees), seed);
    return py::make_tuple(r.model, to_py(to_json(r.metrics)));
  }, py::arg("algo"), py::arg("rows"), py::arg("train_fraction") = 0.7, py::arg("k") = 5,
     py::arg("trees") = 100, py::arg("seed") = 0);

  py::class_<ModelRegistryEntry>(m, "Registry")
      .def(py::init([](const std::string& c) {
             ModelRegistryEntry r;
             r.category = cat_arg(c);
             return r;
           }),
           py::arg("category"))
      .def_property_readonly("active_model", [](const ModelRegistryEntry& r) { return r.active_model; })
      .def_property_readonly("active_accuracy", [](const ModelRegistryEntry& r) { return r.active_metrics.accuracy; })
      .def_property_readonly("history_length", [](const ModelRegistryEntry& r) { return r.history.size(); })
      .def("compare_and_promote", [](ModelRegistryEntry& r, const TrainedModel& cand,
                                     const py::object& metrics, double min_gain) {
        return std::string(to_string(compare_and_promote(r, cand, metrics_from_json(from_py(metrics)), min_gain)));
      }, py::arg("candidate"), py::arg("metrics"), py::arg("min_gain") = kDefaultMinGain);

  // featuredb
  py::class_<FeatureDb>(m, "FeatureDb")
      .def(py::init<>())
      .def_static("open", &FeatureDb::open, py::arg("path"))
      .def("insert", [](FeatureDb& db, const py::list& rows, const std::string& source) {
        std::vector<SampleRecord> recs;
        for (const auto& r : rows) {
          SampleRecord s;
          s.fv = r.cast<FeatureVector>();
          s.id = default_sample_id(s.fv);
          s.source = source;
          s.added_at = iso8601_now();
          recs.push_back(std::move(s));
        }
        return db.insert(recs);
      }, py::arg("rows"), py::arg("source") = "python")
      .def("query", [](const FeatureDb& db, std::optional<std::string> c, std::optional<std::string> l,
                       std::optional<std::size_t> limit) {
        std::vector<FeatureVector> out;
        for (const auto& r : db.query(c ? std::optional(cat_arg(*c)) : std::nullopt,
                                      l ? std::optional(label_arg(*l)) : std::nullopt, limit))
          out.push_back(r.fv);
        return out;
      }, py::arg("category") = py::none(), py::arg("label") = py::none(), py::arg("limit") = py::none())
      .def("export_to", &FeatureDb::export_to, py::arg("path"))
      .def("import_from", &FeatureDb::import_from, py::arg("path"))
      .def("__len__", &FeatureDb::size);

  // policy
  m.def("evaluate_policy", [](const py::object& rules, const std::string& gateway,
                              const std::string& c, const std::string& label, double score,
                              std::int64_t issued_at_us) {
    Verdict v;
    v.gateway_id = gateway;
    v.category = cat_arg(c);
    v.label = label_arg(label);
    v.score = score;
    const auto parsed = rules_from_json(from_py(rules));
    return to_py(to_json(evaluate(parsed, v, issued_at_us)));
  }, py::arg("rules"), py::arg("gateway"), py::arg("category"), py::arg("label"),
     py::arg("score"), py::arg("issued_at_us") = 0);

  // synth
  m.def("synth_session", [](const std::string& label, const std::string& c, double duration_s,
                            std::uint64_t seed, const py::object& profile) {
    CorpusProfiles p;
    if (!profile.is_none()) p = profiles_from_json(from_py(profile));
    return synth_session(label_arg(label), cat_arg(c), p, duration_s, seed);
  }, py::arg("label"), py::arg("category"), py::arg("duration_secs") = 900.0, py::arg("seed") = 0,
     py::arg("profile") = py::none());
  m.def("build_corpus", [](std::size_t nb, std::size_t nm, const std::string& c,
                           const std::filesystem::path& out, double duration_s, std::uint64_t seed,
                           unsigned workers) {
    py::list entries;
    for (const auto& e : build_corpus(nb, nm, cat_arg(c), {}, duration_s, seed, out, workers))
      entries.append(to_py(to_json(e)));
    return entries;
  }, py::arg("n_benign"), py::arg("n_malicious"), py::arg("category"), py::arg("outdir"),
     py::arg("duration_secs") = 900.0, py::arg("seed") = 0, py::arg("workers") = 1);

  // pipeline
  m.def("extract_file_features", [](const std::filesystem::path& pcap, const std::string& c,
                                    double window_secs) {
    PipelineOptions opts;
    opts.category = cat_arg(c);
    opts.window_micros = static_cast<std::int64_t>(window_secs * 1e6);
    return extract_file_features(input_for(pcap), opts);
  }, py::arg("pcap"), py::arg("category"), py::arg("window_secs") = 900.0);
  m.def("run_pipeline", [](const std::vector<std::filesystem::path>& pcaps, const TrainedModel& model,
                           const py::object& rules, unsigned workers) {
    std::vector<PipelineInput> inputs;
    for (const auto& p : pcaps) inputs.push_back(input_for(p));
    PipelineOptions opts;
    opts.category = model.category;
    opts.workers = workers;
    const auto parsed = rules.is_none() ? std::vector<PolicyRule>{} : rules_from_json(from_py(rules));
    const auto report = run_pipeline(inputs, model, parsed, opts);
    py::list out;
    for (const auto& s : report.sessions) {
      py::dict d;
      d["source"] = s.source;
      d["features"] = s.features;
      d["verdict"] = to_py(to_json(s.verdict));
      d["action"] = to_py(to_json(s.action));
      out.append(d);
    }
    return out;
  }, py::arg("pcaps"), py::arg("model"), py::arg("rules") = py::none(), py::arg("workers") = 1);
}
