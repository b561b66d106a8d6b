#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "cellloc/dataset.hpp"
#include "cellloc/error.hpp"
#include "cellloc/synth.hpp"

using namespace cellloc;

namespace {

MeasurementSet parse(const std::string& csv, std::string id = "s") {
  std::istringstream in(csv);
  return read_set(in, std::move(id));
}

std::string error_of(const std::string& csv) {
  try {
    parse(csv);
  } catch (const DataError& e) {
    return e.what();
  }
  return {};
}

MeasurementSet three_node_set() {
  return parse(
      "t,label,rssi_A,rssi_B,rssi_C\n"
      "0,0,-50,-60,-70\n"
      "1,1,-51,-61,-71\n"
      "2,2,-52,-62,-72\n");
}

}  // namespace

TEST_CASE("four-row csv with two nodes") {
  const auto s = parse(
      "t,label,rssi_I-E,rssi_O-DR\n"
      "0,0,-50,-60\n1,0,-51,-61\n2,1,-52,-62\n3,1,-53,-63\n");
  CHECK(s.size() == 4);
  CHECK(s.node_count() == 2);
  CHECK(s.node_labels() == std::vector<std::string>{"I-E", "O-DR"});
  CHECK(s.frames()[2].rssi == std::vector<double>{-52, -62});
  CHECK(*s.frames()[3].label == 1);
  CHECK(s.fully_labeled());
}

TEST_CASE("ingestion errors name the row") {
  const std::string head = "t,label,rssi_A\n";
  CHECK(error_of(head + "0,0,-50\n1,0,-101\n").find("rssi out of range at row 2") !=
        std::string::npos);
  CHECK(error_of(head + "0,0,1\n").find("row 1") != std::string::npos);
  CHECK(error_of(head + "0,0,-50\n0,0,-50\n").find("row 2") != std::string::npos);
  CHECK(error_of(head + "0,3,-50\n").find("row 1") != std::string::npos);
  CHECK(error_of(head + "0,0,-50,-1\n").find("row 1") != std::string::npos);
  CHECK(error_of(head + "0,0,abc\n").find("row 1") != std::string::npos);
  CHECK_FALSE(error_of("t,rssi_A\n0,-50\n").empty());
}

TEST_CASE("unlabeled frames and missing links are accepted") {
  const auto s = parse("t,label,rssi_A\n0,,-100\n1,2,-40.5\n");
  CHECK_FALSE(s.frames()[0].label.has_value());
  CHECK(s.frames()[0].rssi[0] == kMissingLinkDbm);
  CHECK(s.frames()[1].rssi[0] == -40.5);
  CHECK_FALSE(s.fully_labeled());
}

TEST_CASE("synthetic set round-trips through csv bit-exact") {
  const auto sc = Scenario::defaults();
  for (bool integer : {true, false}) {
    auto ch = sc.channel;
    ch.quantize_integer = integer;
    const auto set = generate(sc.geometry, ch, sc.trajectory, "rt");
    std::ostringstream out;
    write_set(out, set);
    CHECK(parse(out.str(), "rt") == set);
  }
}

TEST_CASE("file save and directory load") {
  const auto dir = std::filesystem::temp_directory_path() / "cellloc_dataset_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const auto s = three_node_set();
  save_set(dir / "b.csv", s);
  save_set(dir / "a.csv", s);
  std::ofstream(dir / "ignored.txt") << "x";
  const auto sets = load_directory(dir);
  REQUIRE(sets.size() == 2);
  CHECK(sets[0].id() == "a");
  CHECK(sets[1].id() == "b");
  CHECK(sets[0].frames() == s.frames());
  std::filesystem::remove_all(dir);
}

TEST_CASE("select_nodes") {
  const auto s = three_node_set();
  SUBCASE("full mask is identity") { CHECK(select_nodes(s, NodeMask::full(3)) == s); }
  SUBCASE("mask 0b1 keeps column 0") {
    const auto r = select_nodes(s, NodeMask(0b1, 3));
    CHECK(r.node_labels() == std::vector<std::string>{"A"});
    for (std::size_t i = 0; i < s.size(); ++i) {
      CHECK(r.frames()[i].rssi == std::vector<double>{s.frames()[i].rssi[0]});
      CHECK(r.frames()[i].label == s.frames()[i].label);
    }
  }
  SUBCASE("original column order is kept") {
    const auto m = NodeMask::from_names({"C", "A"}, s.node_labels());
    CHECK(select_nodes(s, m).node_labels() == std::vector<std::string>{"A", "C"});
  }
  SUBCASE("four-node combination on the ten-node layout") {
    const auto names = default_geometry().names();
    const auto m = NodeMask::from_names({"I-E", "I-DR", "O-M", "O-DR"}, names);
    CHECK(m.popcount() == 4);
    CHECK(m.describe(names) == "I-E+I-DR+O-M+O-DR");
  }
  SUBCASE("commutes with slicing") {
    const auto m = NodeMask(0b101, 3);
    CHECK(select_nodes(s.slice(1, 3), m) == select_nodes(s, m).slice(1, 3));
  }
  CHECK_THROWS_AS(NodeMask(0, 3), ConfigError);
  CHECK_THROWS_AS(NodeMask(0b1000, 3), ConfigError);
  CHECK_THROWS_AS(NodeMask::from_names({"Z"}, s.node_labels()), ConfigError);
  try {
    NodeMask::from_names({"Z"}, s.node_labels());
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("A, B, C") != std::string::npos);
  }
}

TEST_CASE("enumerate_splits") {
  const std::vector<std::string> six{"a", "b", "c", "d", "e", "f"};
  const auto plans = enumerate_splits(six, 3);
  CHECK(plans.size() == 60);
  std::set<std::string> seen;
  for (const auto& p : plans) {
    CHECK(p.train_ids.size() == 3);
    CHECK(std::find(p.train_ids.begin(), p.train_ids.end(), p.val_id) ==
          p.train_ids.end());
    seen.insert(p.describe());
  }
  CHECK(seen.size() == 60);
  CHECK(enumerate_splits({"a", "b", "c", "d"}, 3).size() == 4);
  CHECK(enumerate_splits({"a", "b"}, 1).size() == 2);
  CHECK(plans.front().describe() == "a+b+c|d");
  CHECK_THROWS_AS(enumerate_splits({"a", "b", "c"}, 3), ConfigError);
  CHECK_THROWS(validate_split({{"a", "b"}, "a"}));
}

TEST_CASE("enumerate_node_masks") {
  CHECK(enumerate_node_masks(10).size() == 1023);
  CHECK(enumerate_node_masks(4).size() == 15);
  const auto one = enumerate_node_masks(1);
  REQUIRE(one.size() == 1);
  CHECK(one[0].bits() == 1U);
  const auto ten = enumerate_node_masks(10);
  CHECK(std::count(ten.begin(), ten.end(), NodeMask::full(10)) == 1);
}

TEST_CASE("salrb import") {
  const auto path = std::filesystem::temp_directory_path() / "cellloc_salrb.csv";
  std::ofstream(path) << "time,O-DR,I-E,label\n0.0,-60.04,-55.5,0\n0.1,-61,-100,1\n";
  const auto s = import_salrb(path, {"I-E", "O-DR"});
  CHECK(s.node_labels() == std::vector<std::string>{"I-E", "O-DR"});
  CHECK(s.frames()[0].rssi == std::vector<double>{-55.5, -60.0});
  CHECK(s.frames()[1].t == 1);
  CHECK(*s.frames()[1].label == 1);
  std::filesystem::remove(path);
}

TEST_CASE("format_dbm") {
  CHECK(format_dbm(-50) == "-50");
  CHECK(format_dbm(-50.5) == "-50.5");
  CHECK(format_dbm(0.0) == "0");
  CHECK(format_dbm(-0.0) == "0");
}
