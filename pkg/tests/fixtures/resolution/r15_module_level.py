from sklearn.externals import joblib
import sklearn.preprocessing as prep

model = joblib.load("model.pkl")  # expect: sklearn.externals.joblib.load
scaler = prep.StandardScaler()  # expect: sklearn.preprocessing.StandardScaler
