# 局域声子动力学解耦模拟器 - 后端应用
