#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <sstream>

#include "cyclegen/surrogate.hpp"

using namespace cyclegen;

namespace {

const ReferenceFluid fluid;

TEST(GenerateDataset, RejectsEmptyRequest) {
  EXPECT_THROW(generate_dataset(fluid, Schema::PH2TSQ, 0, 1), std::invalid_argument);
}

TEST(GenerateDataset, UnknownSchemaName) {
  EXPECT_THROW(parse_schema("PT2H"), std::invalid_argument);
  EXPECT_EQ(parse_schema("P2TH_SAT"), Schema::P2TH_SAT);
}

TEST(GenerateDataset, DeterministicForFixedSeed) {
  const auto a = generate_dataset(fluid, Schema::PH2TSQ, 500, 42);
  const auto b = generate_dataset(fluid, Schema::PH2TSQ, 500, 42);
  const auto c = generate_dataset(fluid, Schema::PH2TSQ, 500, 43);
  EXPECT_EQ(a.inputs, b.inputs);
  EXPECT_EQ(a.targets, b.targets);
  EXPECT_NE(a.inputs, c.inputs);
}

TEST(GenerateDataset, TargetsMatchClosedForm) {
  for (Schema s : {Schema::PH2TSQ, Schema::PS2H, Schema::P2TH_SAT, Schema::T2P_SAT}) {
    const auto ds = generate_dataset(fluid, s, 300, 5);
    ASSERT_EQ(ds.inputs.rows(), 300);
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
      std::vector<double> in(static_cast<std::size_t>(ds.inputs.cols()));
      for (Eigen::Index j = 0; j < ds.inputs.cols(); ++j) in[static_cast<std::size_t>(j)] = ds.inputs(i, j);
      const auto out = evaluate_targets(fluid, s, in);
      for (Eigen::Index j = 0; j < ds.targets.cols(); ++j) EXPECT_EQ(ds.targets(i, j), out[static_cast<std::size_t>(j)]);
    }
    EXPECT_TRUE(ds.inputs.allFinite());
    EXPECT_TRUE(ds.targets.allFinite());
  }
}

TEST(GenerateDataset, InputsInsideDomainBox) {
  const auto ds = generate_dataset(fluid, Schema::PH2TSQ, 2000, 9);
  EXPECT_GE(ds.inputs.col(0).minCoeff(), 100.0);
  EXPECT_LE(ds.inputs.col(0).maxCoeff(), 15000.0);
  EXPECT_GE(ds.inputs.col(1).minCoeff(), fluid.h_min());
  EXPECT_LE(ds.inputs.col(1).maxCoeff(), fluid.h_max());
  // Both phases are represented.
  EXPECT_GT((ds.targets.col(2).array() >= 0.0).count(), 50);
  EXPECT_GT((ds.targets.col(2).array() < 0.0).count(), 50);
}

TEST(DatasetCsv, RoundTripAndSchemaDetection) {
  const auto ds = generate_dataset(fluid, Schema::P2TH_SAT, 64, 3);
  const auto path = (std::filesystem::temp_directory_path() / "cyclegen_ds.csv").string();
  write_dataset_csv(ds, path);
  const auto back = read_dataset_csv(path);
  EXPECT_EQ(back.schema, Schema::P2TH_SAT);
  EXPECT_EQ(back.inputs, ds.inputs);
  EXPECT_EQ(back.targets, ds.targets);
  std::remove(path.c_str());
}

TEST(DatasetCsv, BadHeaderRejected) {
  const auto path = (std::filesystem::temp_directory_path() / "cyclegen_bad.csv").string();
  {
    std::ofstream out(path);
    out << "p,x,T\n1,2,3\n";
  }
  EXPECT_THROW(read_dataset_csv(path), std::runtime_error);
  std::remove(path.c_str());
}

TEST(ErrorHistogram, BinsFollowPercentIntervals) {
  ErrorHistogram h;
  h.add(100.0, 100.0);      // 0 %
  h.add(100.005, 100.0);    // 0.005 %
  h.add(100.03, 100.0);     // 0.03 %
  h.add(100.07, 100.0);
  h.add(100.3, 100.0);
  h.add(101.0, 100.0);      // 1 % -> (0.5,1]
  h.add(105.0, 100.0);
  h.add(1.0, 0.0);          // infinite relative error
  EXPECT_EQ(h.counts[0], 2);
  EXPECT_EQ(h.counts[1], 1);
  EXPECT_EQ(h.counts[2], 1);
  EXPECT_EQ(h.counts[3], 1);
  EXPECT_EQ(h.counts[4], 1);
  EXPECT_EQ(h.counts[5], 2);
  EXPECT_DOUBLE_EQ(h.fraction_within_1pct(), 6.0 / 8.0);
}

TEST(ErrorHistogram, CsvLayout) {
  ErrorReport rep;
  rep.schema = Schema::T2P_SAT;
  rep.columns = {"p_sat"};
  rep.histograms.resize(1);
  rep.histograms[0].add(1.0, 1.0);
  std::ostringstream out;
  write_histogram_csv(rep, out);
  EXPECT_EQ(out.str(),
            "interval,T2P_SAT_p_sat\n(0,0.01],1\n(0.01,0.05],0\n(0.05,0.1],0\n(0.1,0.5],0\n(0.5,1],0\n(1,inf),0\n");
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.patience = 600;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.split_fractions = {0.5, 0.2, 0.2};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.initial_lr = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(TrainSurrogate, ConstantTargetConvergesQuickly) {
  PropertyDataset ds;
  ds.schema = Schema::T2P_SAT;
  ds.inputs = Vector::LinSpaced(400, 220.0, 300.0);
  ds.targets = Matrix::Constant(400, 1, 5000.0);
  TrainConfig cfg;
  cfg.hidden_layers = {8};
  cfg.max_epochs = 30;
  cfg.patience = 10;
  cfg.batch_size = 32;
  cfg.initial_lr = 1e-2;
  const TrainResult r = train_surrogate(ds, cfg);
  EXPECT_LT(r.history.back().val_loss, 1e-4);
  EXPECT_LE(r.history.size(), 30u);
  EXPECT_NEAR(r.model.forward(Vector{{250.0}})(0), 5000.0, 1.0);
}

TEST(TrainSurrogate, EarlyStoppingBeforeMaxEpochs) {
  // Pure-noise targets: validation loss cannot keep improving.
  PropertyDataset ds;
  ds.schema = Schema::T2P_SAT;
  ds.inputs = Vector::LinSpaced(300, 220.0, 300.0);
  ds.targets.resize(300, 1);
  Rng rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  for (Eigen::Index i = 0; i < 300; ++i) ds.targets(i, 0) = n(rng);
  TrainConfig cfg;
  cfg.hidden_layers = {16, 16};
  cfg.max_epochs = 400;
  cfg.patience = 5;
  cfg.lr_halving_patience = 2;
  cfg.initial_lr = 1e-2;
  cfg.batch_size = 16;
  const TrainResult r = train_surrogate(ds, cfg);
  EXPECT_TRUE(r.early_stopped);
  EXPECT_LT(r.history.size(), 400u);
  EXPECT_EQ(static_cast<int>(r.history.size()), r.best_epoch + cfg.patience);
  // Learning rate halved at least once on the plateau.
  EXPECT_LT(r.history.back().lr, cfg.initial_lr);
}

TEST(TrainSurrogate, NonFiniteLossAborts) {
  PropertyDataset ds;
  ds.schema = Schema::T2P_SAT;
  ds.inputs = Vector::LinSpaced(100, 220.0, 300.0);
  ds.targets = Vector::LinSpaced(100, 0.0, 1.0);
  ds.targets(3, 0) = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg;
  cfg.hidden_layers = {4};
  cfg.max_epochs = 5;
  cfg.patience = 2;
  EXPECT_THROW(train_surrogate(ds, cfg), TrainingError);
}

TEST(TrainSurrogate, TooSmallDataset) {
  PropertyDataset ds;
  ds.schema = Schema::T2P_SAT;
  ds.inputs = Matrix::Constant(3, 1, 250.0);
  ds.targets = Matrix::Constant(3, 1, 1.0);
  EXPECT_THROW(train_surrogate(ds, TrainConfig{}), std::invalid_argument);
}

TEST(TrainSurrogate, SmallSaturationNetworkIsAccurate) {
  const auto ds = generate_dataset(fluid, Schema::T2P_SAT, 4000, 1);
  TrainConfig cfg;
  cfg.hidden_layers = {32, 32};
  cfg.max_epochs = 150;
  cfg.batch_size = 64;
  const TrainResult r = train_surrogate(ds, cfg);
  EXPECT_GE(r.test_report.histograms[0].fraction_within_1pct(), 0.95);
}

TEST(SurrogateFluid, RejectsWrongModelShapes) {
  EXPECT_THROW(SurrogateFluid::from_models(MlpModel({2, 2}), MlpModel({2, 1}), MlpModel({1, 3}),
                                           MlpModel({1, 1}), fluid),
               DimensionError);
}

TEST(SurrogateFluid, DomainChecksMirrorAnalyticFluid) {
  const auto sf = SurrogateFluid::from_models(MlpModel({2, 3}), MlpModel({2, 1}), MlpModel({1, 3}),
                                              MlpModel({1, 1}), fluid);
  EXPECT_THROW(sf.ph_to_tsq(50.0, 300.0), DomainError);
  EXPECT_THROW(sf.p_to_sat(8000.0), DomainError);
}

}  // namespace
