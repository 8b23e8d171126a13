from keras.models import Sequential
from keras.layers import Dense
model = Sequential()
model.add(Dense(16, activation='relu', input_dim=8))
model.add(Dense(1, activation='sigmoid'))
model.compile(loss='binary_crossentropy', optimizer='adam')
model.fit(X, y, epochs=5)
# fine-tune with a smaller step
model.compile(loss='mean_squared_error', optimizer=SGD(lr=0.0001))
model.fit(X, y, epochs=50, batch_size=32)
