"""Published ACDC results (10% labels unless noted), kept as reference data for comparison plots.

Values are (mDice, mIOU, Acc, Pre, Sen, Spe, HD, ASD) unless stated otherwise.
"""

FRAMEWORK_RESULTS = {
    "MT": (0.8860, 0.8034, 0.9952, 0.8898, 0.8829, 0.9720, 9.3659, 2.5960),
    "DAN": (0.8773, 0.7906, 0.9947, 0.8721, 0.8832, 0.9743, 9.3203, 3.0326),
    "ICT": (0.8902, 0.8096, 0.9954, 0.8916, 0.8897, 0.9745, 11.6224, 3.0885),
    "ADVENT": (0.8728, 0.7836, 0.9947, 0.8985, 0.8517, 0.9601, 9.3203, 3.5026),
    "UAMT": (0.8683, 0.7770, 0.9946, 0.8988, 0.8416, 0.9582, 8.3944, 2.2659),
    "DCN": (0.8809, 0.7953, 0.9951, 0.8915, 0.8714, 0.9690, 8.9155, 2.7179),
    "tri": (0.8918, 0.7906, 0.9947, 0.8721, 0.8832, 0.9743, 7.2026, 2.2816),
    "CTCT": (0.8998, 0.8245, 0.9959, 0.8920, 0.9083, 0.9825, 9.6960, 2.7293),
    "S4CVnet": (0.9146, 0.8478, 0.9966, 0.9036, 0.9283, 0.9881, 12.5359, 0.6934),
}

# (IOU, Sen, Spe) per architecture-ablation row, keyed like topology.ABLATION_PRESETS
ABLATION_RESULTS = {
    "ViT-ViT-CPS/A": (0.8034, 0.8829, 0.9720),
    "ViT-ViT-CPS/B": (0.8135, 0.9036, 0.9821),
    "CNN-CNN-CPS/A": (0.7906, 0.8832, 0.9743),
    "CNN-CNN-CPS/B": (0.8231, 0.8967, 0.9761),
    "CNN-MT/B": (0.7345, 0.8094, 0.9586),
    "CNN-MT/C": (0.7660, 0.8481, 0.9585),
    "ViT-MT/B": (0.8159, 0.9032, 0.9822),
    "ViT-MT/C": (0.7359, 0.8415, 0.9716),
    "ViT-ViT-ViT/A": (0.8096, 0.8995, 0.9817),
    "ViT-ViT-ViT/B": (0.8194, 0.9078, 0.9833),
    "ViT-ViT-ViT/C": (0.8183, 0.9037, 0.9822),
    "CNN-CNN-CNN/A": (0.8399, 0.9225, 0.9848),
    "CNN-CNN-CNN/B": (0.8432, 0.9189, 0.9848),
    "CNN-CNN-CNN/C": (0.8345, 0.9168, 0.9828),
    "CNN-ViT-ViT/A": (0.8341, 0.9135, 0.9825),
    "CNN-ViT-ViT/B": (0.8354, 0.9177, 0.9839),
    "CNN-ViT-ViT/C": (0.8478, 0.9283, 0.9881),
}

# supervision modes A-W; wiring of most letters is not encoded as presets
SUPERVISION_MODE_RESULTS = {
    "A": (0.8998, 0.8245, 0.9959, 0.8920, 0.9083, 0.9825, 9.6960, 2.7293),
    "B": (0.8927, 0.8135, 0.9956, 0.8832, 0.9036, 0.9821, 17.7406, 1.6316),
    "C": (0.8918, 0.7906, 0.9947, 0.8721, 0.8832, 0.9743, 7.2026, 2.2816),
    "D": (0.8860, 0.8034, 0.9952, 0.8898, 0.8829, 0.9720, 9.3659, 2.5960),
    "E": (0.8384, 0.7359, 0.9938, 0.8361, 0.8415, 0.9716, 23.7689, 2.2801),
    "F": (0.9061, 0.8341, 0.9961, 0.8970, 0.9165, 0.9829, 20.1008, 1.6110),
    "G": (0.9042, 0.8311, 0.9960, 0.8918, 0.9182, 0.9831, 26.2525, 3.1882),
    "H": (0.9077, 0.8372, 0.9962, 0.9022, 0.9149, 0.9825, 19.1385, 1.1296),
    "I": (0.8958, 0.8184, 0.9958, 0.8866, 0.9084, 0.9841, 19.7125, 1.8150),
    "J": (0.9092, 0.8391, 0.9963, 0.9006, 0.9186, 0.9838, 27.6241, 1.9961),
    "K": (0.8995, 0.8243, 0.9960, 0.8993, 0.9004, 0.9797, 17.9150, 4.4550),
    "M": (0.9084, 0.8380, 0.9962, 0.9056, 0.9125, 0.9814, 18.2136, 1.2208),
    "N": (0.8872, 0.8054, 0.9955, 0.8856, 0.8898, 0.9788, 17.9167, 1.4451),
    "P": (0.9054, 0.8330, 0.9960, 0.8965, 0.9153, 0.9823, 22.2934, 1.8733),
    "Q": (0.8660, 0.7744, 0.9946, 0.8580, 0.8760, 0.9774, 20.0766, 1.8373),
    "R": (0.8854, 0.8030, 0.9953, 0.8900, 0.8819, 0.9742, 20.1741, 1.5861),
    "S": (0.8930, 0.8141, 0.9957, 0.8951, 0.8919, 0.9778, 14.2738, 1.2712),
    "T": (0.9074, 0.8359, 0.9962, 0.9051, 0.9104, 0.9809, 20.4208, 1.7543),
    "U": (0.8843, 0.8010, 0.9954, 0.8834, 0.8860, 0.9786, 19.1564, 1.7462),
    "V": (0.9060, 0.8339, 0.9960, 0.8921, 0.9212, 0.9847, 22.1800, 2.0180),
    "W": (0.9146, 0.8478, 0.9966, 0.9036, 0.9283, 0.9881, 12.5359, 0.6934),
}

LABEL_RATIOS = (0.01, 0.02, 0.05, 0.10, 0.20, 0.30, 0.50, 1.00)

# test mIOU per labeled ratio, ordered as LABEL_RATIOS
RATIO_MIOU = {
    "MT": (0.4623, 0.4460, 0.6021, 0.8034, 0.8294, 0.8397, 0.8542, 0.8583),
    "DAN": (0.5323, 0.5391, 0.5892, 0.7906, 0.8130, 0.8356, 0.8585, 0.8780),
    "ICT": (0.3985, 0.4376, 0.6140, 0.8096, 0.8191, 0.8512, 0.8624, 0.8853),
    "ADVENT": (0.5329, 0.5391, 0.5559, 0.7836, 0.8133, 0.8537, 0.8677, 0.8797),
    "UAMT": (0.4034, 0.4390, 0.5310, 0.7770, 0.8269, 0.8416, 0.8619, 0.8778),
    "DCN": (0.4083, 0.4824, 0.5896, 0.7953, 0.8252, 0.8455, 0.8610, 0.8769),
    "CPS": (0.4583, 0.4806, 0.6426, 0.7906, 0.8383, 0.8572, 0.8654, 0.8865),
    "CTCT": (0.4939, 0.5235, 0.7066, 0.8245, 0.8515, 0.8584, 0.8638, 0.8791),
    "S4CVnet": (0.5374, 0.5479, 0.7418, 0.8432, 0.8491, 0.8604, 0.8679, 0.8691),
}
