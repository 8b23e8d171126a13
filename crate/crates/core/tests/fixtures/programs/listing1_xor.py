import numpy as np
from keras.models import Sequential
from keras.layers.core import Dense, Activation, Dropout
from keras.optimizers import SGD
model = Sequential()
model.add(Dense(8, input_dim=2, activation='tanh'))
model.add(Dense(8, kernel_initializer='uniform'))
model.add(Dropout(0.5))
model.add(Dense(1, kernel_initializer='uniform'))
model.add(Activation('sigmoid'))
X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]])
y = np.array([[0], [1], [1], [0]])
sgd = SGD(lr=0.1, decay=1e-6, momentum=0.9, nesterov=True)

# train
model.compile(loss='mean_squared_error', optimizer=sgd)
model.fit(X, y, nb_epoch=1000, batch_size=4, verbose=0)
print(model.predict(X))
