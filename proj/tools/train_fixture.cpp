// Trains the small MNIST classifiers the tests and demos attack.

#include <CLI11.hpp>

#include <iostream>

#include "maskadv/dataset.hpp"
#include "maskadv/errors.hpp"
#include "maskadv/model_io.hpp"
#include "maskadv/train.hpp"

using namespace maskadv;

int main(int argc, char** argv) {
  CLI::App app{"Train a desk-scale MNIST classifier"};
  std::string data = "data/mnist";
  std::string out = "mnist_mlp.json";
  std::string arch = "mlp";
  std::vector<std::size_t> hidden{128, 64};
  SgdConfig sgd;
  sgd.epochs = 8;
  sgd.learning_rate = 0.02;
  sgd.seed = 7;
  double min_accuracy = 0.0;
  app.add_option("--data", data, "Directory with train-* and t10k-* IDX files");
  app.add_option("--out", out, "Output model JSON");
  app.add_option("--arch", arch, "mlp or cnn")->check(CLI::IsMember({"mlp", "cnn"}));
  app.add_option("--hidden", hidden, "Hidden layer widths of the MLP")->delimiter(',');
  app.add_option("--epochs", sgd.epochs);
  app.add_option("--lr", sgd.learning_rate);
  app.add_option("--seed", sgd.seed);
  app.add_option("--min-accuracy", min_accuracy, "Fail when test accuracy ends below this");
  CLI11_PARSE(app, argc, argv);

  try {
    const InputRange range{0.0, 1.0};
    auto load = [&](const std::string& split, std::vector<Tensor>& xs, std::vector<std::size_t>& ys) {
      const Dataset d = Dataset::from_idx(split, data + "/" + split + "-images-idx3-ubyte",
                                          data + "/" + split + "-labels-idx1-ubyte");
      for (std::size_t i = 0; i < d.size(); ++i) {
        xs.push_back(d.image(i, range));
        ys.push_back(d.label(i));
      }
      return d.image_shape();
    };
    std::vector<Tensor> train_x, test_x;
    std::vector<std::size_t> train_y, test_y;
    const Shape shape = load("train", train_x, train_y);
    load("t10k", test_x, test_y);

    NetworkModel model = [&] {
      if (arch == "mlp") return make_mlp(shape, range, hidden, 10, sgd.seed);
      const std::vector<ConvSpec> convs{{8, 5, 2, 0}, {16, 3, 2, 0}};
      return make_cnn(shape, range, convs, 10, sgd.seed);
    }();
    const TrainingReport report = train_sgd(model, train_x, train_y, sgd);
    for (std::size_t e = 0; e < report.epoch_loss.size(); ++e)
      std::cout << "epoch " << e + 1 << " loss " << report.epoch_loss[e] << "\n";
    const double acc = accuracy(model, test_x, test_y);
    std::cout << "test accuracy " << acc << " on " << test_x.size() << " images\n";
    save_model(model, out);
    if (acc < min_accuracy) {
      std::cerr << "accuracy " << acc << " below required " << min_accuracy << "\n";
      return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
