#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <limits>
#include <random>

#include "flowkit/normalize.hpp"
#include "support.hpp"

using namespace flowkit;
using testsupport::graph;
using testsupport::stream;
using testsupport::unit;

namespace {

const char* kMinimalDoc = R"({
  "case_name": "mini",
  "property_package": "Ideal",
  "components": [],
  "units": [{"id": "P1", "type": "Pump", "label": ""}],
  "streams": [
    {"id": "F1", "label": "", "class": "feed", "source": null, "destination": "P1"},
    {"id": "S1", "label": "", "class": "product", "source": "P1", "destination": null}
  ]
})";

}  // namespace

TEST_CASE("parse_ir accepts a minimal pump document") {
    auto g = ir::parse_ir(kMinimalDoc);
    CHECK(g.units.size() == 1);
    CHECK(g.streams.size() == 2);
    CHECK(g.units[0].id == "P1");
    CHECK(g.streams[0].cls == ir::StreamClass::Feed);
}

TEST_CASE("parse_ir rejects a dangling endpoint naming the unknown unit") {
    std::string doc = R"({
      "case_name": "x", "property_package": "p", "components": [],
      "units": [{"id": "P1", "type": "Pump", "label": ""}],
      "streams": [{"id": "S1", "label": "", "class": "intermediate", "source": "P1", "destination": "U9"}]
    })";
    try {
        ir::parse_ir(doc);
        FAIL("expected ReferenceError");
    } catch (const ir::ReferenceError& e) {
        CHECK(e.id == "U9");
        CHECK(std::string(e.what()).find("U9") != std::string::npos);
    }
}

TEST_CASE("parse_ir error taxonomy") {
    CHECK_THROWS_AS(ir::parse_ir("not json at all {"), ir::SyntaxError);
    CHECK_THROWS_AS(ir::parse_ir(R"({"case_name": "x"})"), ir::SchemaError);
    CHECK_THROWS_AS(ir::parse_ir(R"({
      "case_name": "x", "property_package": "p", "components": [],
      "units": [{"id": "P1", "type": "Pump"}], "streams": []
    })"),
                    ir::SchemaError);  // unit missing label
    CHECK_THROWS_AS(ir::parse_ir(R"({
      "case_name": 3, "property_package": "p", "components": [], "units": [], "streams": []
    })"),
                    ir::SchemaError);  // wrong field type
}

TEST_CASE("cs1 fixture parses to 3 units and 7 streams") {
    auto g = ir::parse_ir(testsupport::read_data("cases/cs1_desalting/reference.json"));
    CHECK(g.units.size() == 3);
    CHECK(g.streams.size() == 7);
    int feeds = 0, intermediates = 0, products = 0;
    for (const auto& s : g.streams) {
        if (s.cls == ir::StreamClass::Feed) ++feeds;
        if (s.cls == ir::StreamClass::Intermediate) ++intermediates;
        if (s.cls == ir::StreamClass::Product) ++products;
    }
    CHECK(feeds == 3);
    CHECK(intermediates == 2);
    CHECK(products == 2);
}

TEST_CASE("canonical serialization round-trips and is byte-stable") {
    auto g = ir::parse_ir(testsupport::read_data("cases/cs2_merox/reference.json"));
    std::string once = ir::canonical_serialize(g);
    std::string twice = ir::canonical_serialize(g);
    CHECK(once == twice);
    auto reparsed = ir::parse_ir(once);
    CHECK(ir::structurally_equal(g, reparsed));
}

TEST_CASE("unit insertion order does not change canonical bytes") {
    auto a = graph({unit("B", "Pump"), unit("A", "Pump")},
                   {stream("S1", std::nullopt, "A"), stream("S2", "A", "B"),
                    stream("S3", "B", std::nullopt)});
    auto b = graph({unit("A", "Pump"), unit("B", "Pump")},
                   {stream("S3", "B", std::nullopt), stream("S1", std::nullopt, "A"),
                    stream("S2", "A", "B")});
    CHECK(ir::canonical_serialize(a) == ir::canonical_serialize(b));
}

TEST_CASE("unknown extra fields round-trip opaquely") {
    std::string doc = R"({
      "case_name": "x", "property_package": "p", "components": [],
      "annotation": {"author": "someone"},
      "units": [{"id": "P1", "type": "Pump", "label": "", "sketch_xy": [10, 20]}],
      "streams": [
        {"id": "F1", "label": "", "class": "feed", "source": null, "destination": "P1"},
        {"id": "S1", "label": "", "class": "product", "source": "P1", "destination": null, "color": "red"}
      ]
    })";
    auto g = ir::parse_ir(doc);
    std::string serialized = ir::canonical_serialize(g);
    CHECK(serialized.find("annotation") != std::string::npos);
    CHECK(serialized.find("sketch_xy") != std::string::npos);
    CHECK(serialized.find("color") != std::string::npos);
    CHECK(ir::structurally_equal(g, ir::parse_ir(serialized)));
}

TEST_CASE("round trip holds over random valid graphs") {
    std::mt19937 rng(20240811);
    testsupport::RandomGraphOptions opt;
    opt.inject_column = true;
    for (int i = 0; i < 100; ++i) {
        auto g = testsupport::random_valid_graph(rng, opt);
        auto reparsed = ir::parse_ir(ir::canonical_serialize(g));
        REQUIRE(ir::structurally_equal(g, reparsed));
    }
}

TEST_CASE("validate_graph accepts the valid cs1 fixture modulo arity") {
    auto catalog = testsupport::default_catalog();
    auto g = ir::parse_ir(testsupport::read_data("cases/cs1_desalting/reference.json"));
    auto violations = ir::validate_graph(g, catalog);
    // The raw diagram legitimately overloads the desalter inlet.
    for (const auto& v : violations) {
        CHECK(v.kind == ir::ViolationKind::PortArity);
        CHECK(v.element == "V-101");
    }
    CHECK(violations.size() == 1);

    auto [normalized, log] = normalize::run_passes(g, catalog);
    CHECK(ir::validate_graph(normalized, catalog, {true}).empty());
}

TEST_CASE("duplicate stream id yields one DuplicateId violation") {
    auto catalog = testsupport::default_catalog();
    auto g = graph({unit("P1", "Pump")},
                   {stream("S1", std::nullopt, "P1"), stream("S1", "P1", std::nullopt)});
    auto violations = ir::validate_graph(g, catalog);
    int dup = 0;
    for (const auto& v : violations) {
        if (v.kind == ir::ViolationKind::DuplicateId) ++dup;
    }
    CHECK(dup == 1);
}

TEST_CASE("pump with two inlets reports PortArity with found and limit") {
    auto catalog = testsupport::default_catalog();
    auto g = graph({unit("P1", "Pump")},
                   {stream("F1", std::nullopt, "P1"), stream("F2", std::nullopt, "P1"),
                    stream("S1", "P1", std::nullopt)});
    auto violations = ir::validate_graph(g, catalog);
    REQUIRE(violations.size() == 1);
    CHECK(violations[0].kind == ir::ViolationKind::PortArity);
    CHECK(violations[0].element == "P1");
    CHECK(violations[0].found == 2);
    CHECK(violations[0].limit == 1);
}

TEST_CASE("port signatures from the shipped catalog") {
    auto catalog = testsupport::default_catalog();
    auto mixer = ir::port_signature(catalog, "Mixer");
    CHECK(mixer.min_inlets == 2);
    CHECK(mixer.max_inlets == ir::PortSignature::kUnbounded);
    CHECK(mixer.min_outlets == 1);
    CHECK(mixer.max_outlets == 1);
    auto pump = ir::port_signature(catalog, "Pump");
    CHECK(pump.min_inlets == 1);
    CHECK(pump.max_inlets == 1);
    CHECK(pump.min_outlets == 1);
    CHECK(pump.max_outlets == 1);
    CHECK_THROWS_AS(ir::port_signature(catalog, "Frobnicator"), ir::UnknownUnitTypeError);
}

TEST_CASE("reserved prefixes are rejected in input graphs but allowed post-normalization") {
    auto catalog = testsupport::default_catalog();
    auto g = graph({unit("MIX-AUTO-1", "Mixer")},
                   {stream("F1", std::nullopt, "MIX-AUTO-1"),
                    stream("F2", std::nullopt, "MIX-AUTO-1"),
                    stream("S1", "MIX-AUTO-1", std::nullopt)});
    auto strict = ir::validate_graph(g, catalog);
    bool reserved = false;
    for (const auto& v : strict) reserved |= v.kind == ir::ViolationKind::ReservedId;
    CHECK(reserved);
    auto permissive = ir::validate_graph(g, catalog, {true});
    for (const auto& v : permissive) CHECK(v.kind != ir::ViolationKind::ReservedId);
}

TEST_CASE("each single mutation yields at least one violation naming the element") {
    auto catalog = testsupport::default_catalog();
    std::mt19937 rng(99);
    testsupport::RandomGraphOptions opt;
    opt.allow_overflow = false;
    for (int i = 0; i < 60; ++i) {
        auto g = testsupport::random_valid_graph(rng, opt);
        REQUIRE(ir::validate_graph(g, catalog).empty());

        auto mutated = g;
        int which = static_cast<int>(rng() % 5);
        std::string element;
        switch (which) {
            case 0:  // duplicate a unit id
                mutated.units.push_back(mutated.units.front());
                element = mutated.units.front().id;
                break;
            case 1:  // dangling endpoint
                for (auto& s : mutated.streams) {
                    if (s.destination) {
                        s.destination = "GHOST";
                        element = s.id;
                        break;
                    }
                }
                break;
            case 2:  // class contradiction
                for (auto& s : mutated.streams) {
                    if (s.cls == ir::StreamClass::Feed) {
                        s.cls = ir::StreamClass::Product;
                        element = s.id;
                        break;
                    }
                }
                break;
            case 3:  // unknown unit type
                mutated.units.front().type = "Frobnicator";
                element = mutated.units.front().id;
                break;
            case 4:  // self loop
            {
                ir::Stream s = testsupport::stream("SXX", mutated.units.front().id,
                                                   mutated.units.front().id);
                mutated.streams.push_back(s);
                element = "SXX";
                break;
            }
        }
        if (element.empty()) continue;
        auto violations = ir::validate_graph(mutated, catalog);
        REQUIRE(!violations.empty());
        bool names_element = false;
        for (const auto& v : violations) names_element |= v.element == element;
        CHECK(names_element);
    }
}

TEST_CASE("non-finite spec is a violation") {
    auto catalog = testsupport::default_catalog();
    auto g = graph({unit("P1", "Pump")},
                   {stream("F1", std::nullopt, "P1"), stream("S1", "P1", std::nullopt)});
    g.streams[0].specs["molar_flow"] = std::numeric_limits<double>::infinity();
    auto violations = ir::validate_graph(g, catalog);
    REQUIRE(violations.size() == 1);
    CHECK(violations[0].kind == ir::ViolationKind::NonFiniteSpec);
}
