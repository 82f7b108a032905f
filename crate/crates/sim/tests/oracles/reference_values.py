import mpmath as mp, numpy as np
from scipy import stats
mp.mp.dps=30
print("F sigma10 d20:", 2/(10*mp.sqrt(2*mp.pi))*mp.e**(-2))
print("softmax:", 1/(1+mp.e), mp.e/(1+mp.e))
# Fermat point grid
pts=np.array([[0,0],[1,0],[0.5,1]])
xs=np.arange(0,1.0005,0.001); ys=np.arange(0,1.0005,0.001)
X,Y=np.meshgrid(xs,ys)
obj=sum(np.hypot(X-p[0],Y-p[1]) for p in pts)
i=np.unravel_index(obj.argmin(),obj.shape)
print("fermat grid:", X[i],Y[i], repr(obj.min()))
from scipy.optimize import minimize
r=minimize(lambda z: sum(np.hypot(z[0]-p[0],z[1]-p[1]) for p in pts),[0.5,0.3],tol=1e-14,method='Nelder-Mead',options={'xatol':1e-13,'fatol':1e-15,'maxiter':10000})
print("fermat opt:", r.x, repr(r.fun))
print("anova:", stats.f_oneway([1,2,3],[2,3,4],[3,4,5]))
g1=[4.2,5.1,3.9,4.8,5.5,4.4]; g2=[5.9,6.3,5.2,6.8,6.1,5.7]; g3=[4.6,5.0,4.1,5.3,4.9,4.7]
print("anova3:", stats.f_oneway(g1,g2,g3))
res=stats.tukey_hsd(g1,g2,g3)
print("tukey pvalues:\n", repr(res.pvalue))
print("tukey stat:\n", res.statistic)
# unequal sizes
h1=[10.1,11.3,9.8,10.6]; h2=[12.0,12.9,11.7,12.4,13.1]; h3=[10.4,10.9,11.2,10.0,10.7,11.5]
r2=stats.tukey_hsd(h1,h2,h3); print("tukey unequal:\n", repr(r2.pvalue)); print("anova unequal", stats.f_oneway(h1,h2,h3))
# ptukey reference values
for q,k,df in [(3.5,3,10),(2.0,2,5),(4.0,5,20),(3.0,3,1000),(1.0,4,30),(5.0,3,12)]:
    print("ptukey",q,k,df, repr(stats.studentized_range.cdf(q,k,df)))
print("qcrit 3,15:", repr(stats.studentized_range.ppf(0.95,3,15)))
print("fcdf:", repr(stats.f.sf(3.0,2,6)))
