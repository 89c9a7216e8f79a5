"""Frozen outputs of scipy.stats on fixed datasets (ttest_ind with equal_var=False, shapiro)."""

# (a, b, t, df, p)
WELCH_CASES = [
    (
        [11.2144, 10.8238, 10.9684, 9.4875, 9.443],
        [11.6166, 11.9991, 10.329, 10.7016, 15.7599, 12.1719, 10.3627],
        -1.8081567418873785, 8.846035961997435, 0.10461775241831597,
    ),
    (
        [-1.1769, 1.2913, 0.6674, 0.7898, 1.122, -1.6176, 0.3583, 0.5817, 1.0099, 1.6052],
        [-0.6437, 0.0617, -0.1239, -0.2201, -0.2679, 0.9191, 1.3107, 0.1917, 0.0351, -0.3095],
        0.9649328850242518, 14.206480417421378, 0.3507178747917341,
    ),
    (
        [104.0027, 106.0141, 74.2415, 94.1116, 105.28, 104.8359, 112.0593, 122.3572],
        [92.2505, 93.4785, 94.4398, 96.5976, 93.8402, 95.1686, 92.7015, 94.9592,
         93.7482, 94.9551, 93.5108, 93.616, 93.8937, 95.0702, 94.3017],
        1.7477370848954223, 7.044504656601379, 0.12373150200581481,
    ),
    (
        [1.0368, 1.0561, 1.4068, 1.352, 0.9983, 1.0668, 0.8391, 1.1155, 0.8914, 0.6555,
         1.0846, 0.747, 0.8852, 1.1375, 1.0445, 1.2791, 1.0322, 1.0666, 0.8762, 1.1272,
         0.763, 0.9403, 1.1368, 1.026, 1.1197, 1.186, 1.0178, 0.8479, 0.9529, 1.0047],
        [1.43, 0.2651, 1.6246, 0.6517, 1.069, 0.5579, 1.5696, 1.6259, 1.7498, 1.3787,
         1.6381, 1.389],
        -1.5241365718603088, 12.037972468272123, 0.1533059524934062,
    ),
    (
        [3.0082, 3.0034, 3.0161, 2.9973, 3.0174, 3.0095],
        [2.9729, 2.1345, 3.0812, 3.1942, 3.066, 3.799],
        -0.14970639481299847, 5.002028346511445, 0.8868453565182289,
    ),
]

GAUSS_20 = [
    53.8779, 57.2507, 57.7548, 58.7269, 47.107, 57.8452, 53.9347, 45.5822, 53.4534,
    56.3229, 40.8421, 49.1255, 57.2018, 39.9983, 51.208, 50.8521, 49.5177, 55.6371,
    51.7451, 51.6116,
]
GAUSS_20_W, GAUSS_20_P = 0.9167741583042243, 0.08589886458443269

UNIFORM_50 = [
    0.9431, 0.5113, 0.9762, 0.0808, 0.6074, 0.3765, 0.8019, 0.1745, 0.8716, 0.5439,
    0.9022, 0.4772, 0.4305, 0.7889, 0.9842, 0.3697, 0.9689, 0.929, 0.1777, 0.6089,
    0.7049, 0.9428, 0.6657, 0.1334, 0.4979, 0.4936, 0.5002, 0.9586, 0.3499, 0.2238,
    0.5221, 0.6412, 0.9391, 0.582, 0.2678, 0.9298, 0.4917, 0.6758, 0.476, 0.217,
    0.6926, 0.7706, 0.1908, 0.4599, 0.3618, 0.1707, 0.2214, 0.9625, 0.8842, 0.3823,
]
UNIFORM_50_W, UNIFORM_50_P = 0.9355192330422593, 0.008992972971628335

SMALL_SW = [
    ([1.0, 2.0, 4.0], 0.9642857142857142, 0.6368868450289689),
    ([1, 2, 3, 4, 10], 0.8357883166461942, 0.1536125843490888),
    ([3.1, 2.2, 5.5, 1.0, 7.7, 4.4, 2.9, 3.3, 6.1, 0.4, 9.9], 0.957540539028399, 0.7406768018591485),
]
