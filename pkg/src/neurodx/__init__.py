"""neurodx: a self-contained hybrid CNN-LSTM image classification
toolkit (VGG16-style feature extractor, LSTM, dense softmax head) with a
full from-scratch training stack and evaluation reports."""

__version__ = "0.1.0"
