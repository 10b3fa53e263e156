#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "scramblesuit/descriptor.hpp"
#include "scramblesuit/flowstats.hpp"
#include "scramblesuit/session.hpp"

namespace py = pybind11;
using namespace scramblesuit;

namespace {

Bytes to_vec(const py::bytes& data) {
  std::string_view view = data;
  return Bytes(view.begin(), view.end());
}

py::bytes to_py(ByteSpan data) {
  return py::bytes(reinterpret_cast<const char*>(data.data()), data.size());
}

struct PySegment {
  std::uint32_t delay_ms;
  py::bytes data;
};

std::vector<PySegment> wrap_segments(const std::vector<session::WireSegment>& segs) {
  std::vector<PySegment> out;
  for (const auto& s : segs)
    out.push_back({s.delay_ms, to_py({s.data.data(), s.data.size()})});
  return out;
}

}  // namespace

PYBIND11_MODULE(_scramblesuit, m) {
  m.doc() = "Polymorphic obfuscation transport: sessions, descriptors and "
            "flow statistics";

  // --- descriptors ---------------------------------------------------------
  m.def("base32_encode",
        [](const py::bytes& data) { return descriptor::base32_encode(to_vec(data)); });
  m.def("base32_decode", [](const std::string& text) -> py::object {
    auto decoded = descriptor::base32_decode(text);
    if (!decoded) return py::none();
    return to_py({decoded->data(), decoded->size()});
  });
  m.def("parse_descriptor", [](const std::string& line) -> py::object {
    std::string error;
    auto desc = descriptor::parse_descriptor(line, &error);
    if (!desc) throw py::value_error(error);
    return py::make_tuple(desc->host, desc->port,
                          to_py({desc->secret.data(), desc->secret.size()}));
  });
  m.def("format_descriptor",
        [](const std::string& host, std::uint16_t port, const py::bytes& secret) {
          return descriptor::format_descriptor({host, port, to_vec(secret)});
        });

  // --- sessions ------------------------------------------------------------
  py::class_<PySegment>(m, "WireSegment")
      .def_readonly("delay_ms", &PySegment::delay_ms)
      .def_readonly("data", &PySegment::data);

  py::class_<session::ServerContext>(m, "ServerContext")
      .def(py::init([](const py::bytes& secret) {
        return std::make_unique<session::ServerContext>(to_vec(secret),
                                                        session::system_clock());
      }));

  py::class_<session::ClientSession>(m, "ClientSession")
      .def(py::init([](const py::bytes& secret) {
        session::ClientSession::Config cfg;
        cfg.bridge_secret = to_vec(secret);
        return std::make_unique<session::ClientSession>(std::move(cfg));
      }))
      .def("connect",
           [](session::ClientSession& s) { return wrap_segments(s.connect()); })
      .def("pump",
           [](session::ClientSession& s, const py::bytes& wire) {
             Bytes in = to_vec(wire);
             auto res = s.pump({in.data(), in.size()});
             return py::make_tuple(to_py({res.app_data.data(), res.app_data.size()}),
                                   wrap_segments(res.wire_out));
           })
      .def("send_app",
           [](session::ClientSession& s, const py::bytes& data) {
             Bytes in = to_vec(data);
             return wrap_segments(s.send_app({in.data(), in.size()}));
           })
      .def_property_readonly("established", [](const session::ClientSession& s) {
        return s.phase() == session::Phase::Established;
      })
      .def_property_readonly("poisoned", &session::ClientSession::poisoned);

  py::class_<session::ServerSession>(m, "ServerSession")
      .def(py::init([](session::ServerContext& ctx) {
             return std::make_unique<session::ServerSession>(ctx);
           }),
           py::keep_alive<1, 2>())
      .def("pump",
           [](session::ServerSession& s, const py::bytes& wire) {
             Bytes in = to_vec(wire);
             auto res = s.pump({in.data(), in.size()});
             return py::make_tuple(to_py({res.app_data.data(), res.app_data.size()}),
                                   wrap_segments(res.wire_out));
           })
      .def("send_app",
           [](session::ServerSession& s, const py::bytes& data) {
             Bytes in = to_vec(data);
             return wrap_segments(s.send_app({in.data(), in.size()}));
           })
      .def("close", &session::ServerSession::close)
      .def_property_readonly("established", &session::ServerSession::established)
      .def_property_readonly("poisoned", &session::ServerSession::poisoned);

  // --- flow statistics -----------------------------------------------------
  m.def("ks_two_sample",
        [](const std::vector<double>& a, const std::vector<double>& b,
           double alpha) {
          auto r = flowstats::ks_two_sample(a, b, alpha);
          return py::make_tuple(r.statistic, r.reject);
        },
        py::arg("a"), py::arg("b"), py::arg("alpha") = 0.05);
  m.def("run_flow_trial",
        [](std::uint64_t size, std::uint64_t seed) {
          auto result =
              flowstats::run_flow_trial(size, flowstats::trial_seed(seed, 0));
          py::dict out;
          out["payload_intact"] = result.payload_intact;
          out["overhead"] = result.report.total_overhead;
          out["goodput_bytes_per_sec"] = result.report.goodput_bytes_per_sec;
          out["segments"] = result.trace.records.size();
          return out;
        },
        py::arg("size"), py::arg("seed") = 0);
}
