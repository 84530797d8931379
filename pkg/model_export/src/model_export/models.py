"""Tiny PointNet-style torch models (no TNets).

Classification: a shared pointwise MLP encoder, global max pool, dense
head with 30% dropout before the last hidden layer. Segmentation: a
pointwise encoder whose per-point features are concatenated with the
repeated pooled global feature before a pointwise head. Pointwise layers
are nn.Linear modules applied to (batch, points, features) tensors,
which matches stride-1 1D convolution.
"""

import torch
import torch.nn as nn

CLS_WIDTHS = (8, 8, 8, 16, 128)
CLS_HEAD = (64, 32)
SEG_WIDTHS = (8, 16, 32)
SEG_BOTTLENECK = 16
SEG_HEAD = (32, 16)


class PointNetClassifier(nn.Module):
    def __init__(self, num_classes=3, widths=CLS_WIDTHS, head=CLS_HEAD,
                 dropout=0.3):
        super().__init__()
        self.encoder = nn.ModuleList()
        self.encoder_bn = nn.ModuleList()
        d = 3
        for w in widths:
            self.encoder.append(nn.Linear(d, w))
            self.encoder_bn.append(nn.BatchNorm1d(w))
            d = w
        self.head = nn.ModuleList()
        self.head_bn = nn.ModuleList()
        for w in head:
            self.head.append(nn.Linear(d, w))
            self.head_bn.append(nn.BatchNorm1d(w))
            d = w
        self.dropout = nn.Dropout(dropout)
        self.out = nn.Linear(d, num_classes)
        self.relu = nn.ReLU()

    def forward(self, x):
        for lin, bn in zip(self.encoder, self.encoder_bn):
            x = self.relu(bn(lin(x).transpose(1, 2)).transpose(1, 2))
        x = x.max(dim=1).values
        for i, (lin, bn) in enumerate(zip(self.head, self.head_bn)):
            if i == len(self.head) - 1:
                x = self.dropout(x)
            x = self.relu(bn(lin(x)))
        return self.out(x)


class PointNetSegmenter(nn.Module):
    def __init__(self, num_parts=3, widths=SEG_WIDTHS,
                 bottleneck=SEG_BOTTLENECK, head=SEG_HEAD):
        super().__init__()
        self.encoder = nn.ModuleList()
        self.encoder_bn = nn.ModuleList()
        d = 3
        for w in widths:
            self.encoder.append(nn.Linear(d, w))
            self.encoder_bn.append(nn.BatchNorm1d(w))
            d = w
        self.bottleneck = nn.Linear(d, bottleneck)
        self.bottleneck_bn = nn.BatchNorm1d(bottleneck)
        d = sum(widths) + bottleneck
        self.head = nn.ModuleList()
        self.head_bn = nn.ModuleList()
        for w in head:
            self.head.append(nn.Linear(d, w))
            self.head_bn.append(nn.BatchNorm1d(w))
            d = w
        self.out = nn.Linear(d, num_parts)
        self.relu = nn.ReLU()

    def forward(self, x):
        n = x.shape[1]
        skips = []
        for lin, bn in zip(self.encoder, self.encoder_bn):
            x = self.relu(bn(lin(x).transpose(1, 2)).transpose(1, 2))
            skips.append(x)
        x = self.bottleneck_bn(
            self.bottleneck(x).transpose(1, 2)).transpose(1, 2)
        pooled = x.max(dim=1).values
        tiled = pooled.unsqueeze(1).expand(-1, n, -1)
        x = torch.cat(skips + [tiled], dim=2)
        for lin, bn in zip(self.head, self.head_bn):
            x = self.relu(bn(lin(x).transpose(1, 2)).transpose(1, 2))
        return self.out(x)
